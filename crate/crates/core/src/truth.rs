//! Ground-truth records and the flow/truth join.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::flow::{Endpoint, FlowKey};
use crate::time::Timestamp;

/// Traffic classes, in classifier output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrafficClass {
    Normal,
    ProfileManipulation,
    DenialOfCharge,
    HeartbeatFlood,
    UnauthorizedAccess,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 5] = [
        TrafficClass::Normal,
        TrafficClass::ProfileManipulation,
        TrafficClass::DenialOfCharge,
        TrafficClass::HeartbeatFlood,
        TrafficClass::UnauthorizedAccess,
    ];
    pub const COUNT: usize = 5;

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Normal => "normal",
            TrafficClass::ProfileManipulation => "ProfileManipulation",
            TrafficClass::DenialOfCharge => "DenialOfCharge",
            TrafficClass::HeartbeatFlood => "HeartbeatFlood",
            TrafficClass::UnauthorizedAccess => "UnauthorizedAccess",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_attack(self) -> bool {
        self != TrafficClass::Normal
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown traffic class {s:?}"))
    }
}

/// One ground-truth interval for a connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub client_ip: Ipv4Addr,
    pub client_port: u16,
    pub server_ip: Ipv4Addr,
    pub server_port: u16,
    pub start: Timestamp,
    pub end: Timestamp,
    pub label: TrafficClass,
    pub hub: usize,
}

impl TruthRecord {
    pub fn key(&self) -> FlowKey {
        FlowKey::new(
            Endpoint::new(self.client_ip, self.client_port),
            Endpoint::new(self.server_ip, self.server_port),
        )
    }

    fn overlaps(&self, start: Timestamp, end: Timestamp) -> bool {
        self.start <= end && self.end >= start
    }
}

pub const TRUTH_HEADER: [&str; 8] =
    ["client_ip", "client_port", "server_ip", "server_port", "start", "end", "label", "hub"];

#[derive(Debug, thiserror::Error)]
pub enum TruthError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("truth file line {line}: {message}")]
    Row { line: u64, message: String },
}

pub fn write_truth_to<W: Write>(writer: W, records: &[TruthRecord]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(TRUTH_HEADER)?;
    for r in records {
        w.write_record([
            r.client_ip.to_string(),
            r.client_port.to_string(),
            r.server_ip.to_string(),
            r.server_port.to_string(),
            r.start.to_string(),
            r.end.to_string(),
            r.label.to_string(),
            r.hub.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth(path: impl AsRef<Path>, records: &[TruthRecord]) -> Result<(), TruthError> {
    write_truth_to(BufWriter::new(File::create(path)?), records)?;
    Ok(())
}

pub fn read_truth_from<R: Read>(reader: R) -> Result<Vec<TruthRecord>, TruthError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| TruthError::Row { line, message };
        if rec.len() < TRUTH_HEADER.len() {
            return Err(err(format!("expected {} columns", TRUTH_HEADER.len())));
        }
        let f = |i: usize| rec[i].trim();
        out.push(TruthRecord {
            client_ip: f(0).parse().map_err(|_| err(format!("bad ip {:?}", f(0))))?,
            client_port: f(1).parse().map_err(|_| err(format!("bad port {:?}", f(1))))?,
            server_ip: f(2).parse().map_err(|_| err(format!("bad ip {:?}", f(2))))?,
            server_port: f(3).parse().map_err(|_| err(format!("bad port {:?}", f(3))))?,
            start: f(4).parse().map_err(|e| err(format!("{e}")))?,
            end: f(5).parse().map_err(|e| err(format!("{e}")))?,
            label: f(6).parse().map_err(err)?,
            hub: f(7).parse().map_err(|_| err(format!("bad hub {:?}", f(7))))?,
        });
    }
    Ok(out)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>, TruthError> {
    read_truth_from(io::BufReader::new(File::open(path)?))
}

/// Result of matching one flow against the truth table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthMatch {
    pub label: TrafficClass,
    pub hub: usize,
}

/// Index over truth records by connection key.
pub struct TruthIndex {
    by_key: HashMap<FlowKey, Vec<TruthRecord>>,
}

impl TruthIndex {
    pub fn new(records: &[TruthRecord]) -> Self {
        let mut by_key: HashMap<FlowKey, Vec<TruthRecord>> = HashMap::new();
        for r in records {
            by_key.entry(r.key()).or_default().push(r.clone());
        }
        TruthIndex { by_key }
    }

    /// Finds the label of a flow: any overlapping attack interval wins over
    /// overlapping normal intervals; the earliest attack interval breaks
    /// ties.
    pub fn lookup(&self, fv: &FeatureVector) -> Option<TruthMatch> {
        let key = FlowKey::new(Endpoint::new(fv.src_ip, fv.src_port), Endpoint::new(fv.dst_ip, fv.dst_port));
        let candidates = self.by_key.get(&key)?;
        let overlapping = candidates
            .iter()
            .filter(|r| r.overlaps(fv.flow_start_timestamp, fv.flow_end_timestamp));
        let mut best: Option<&TruthRecord> = None;
        for r in overlapping {
            best = match best {
                None => Some(r),
                Some(b) if !b.label.is_attack() && r.label.is_attack() => Some(r),
                Some(b) if b.label.is_attack() == r.label.is_attack() && r.start < b.start => Some(r),
                keep => keep,
            };
        }
        best.map(|r| TruthMatch { label: r.label, hub: r.hub })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinReport {
    pub matched: usize,
    pub unmatched: usize,
}

impl JoinReport {
    pub fn rate(&self) -> f64 {
        let total = self.matched + self.unmatched;
        if total == 0 {
            1.0
        } else {
            self.matched as f64 / total as f64
        }
    }
}

/// Fills the `label` column from the truth table; unmatched flows keep
/// their current label.
pub fn apply_labels(vectors: &mut [FeatureVector], truth: &[TruthRecord]) -> JoinReport {
    let index = TruthIndex::new(truth);
    let mut report = JoinReport::default();
    for fv in vectors.iter_mut() {
        match index.lookup(fv) {
            Some(m) => {
                fv.label = m.label.to_string();
                report.matched += 1;
            }
            None => report.unmatched += 1,
        }
    }
    report
}
