//! Capture → features → scaled model input → verdicts and events.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use flowguard_core::csv_io::write_feature_csv_to;
use flowguard_core::features::format_number;
use flowguard_core::{extract_pcap, Extraction, FeatureVector, TrafficClass};
use flowguard_fl::ModelFile;

use crate::syslog::{SecurityEvent, SyslogSink};
use crate::IdsError;

pub const AUDIT_COLUMNS: [&str; 2] = ["predicted_label", "score"];

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub flow: FeatureVector,
    pub label: TrafficClass,
    /// Winning softmax score.
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Detection {
    /// One per flow, in `(flow_start_timestamp, flow_id)` order.
    pub verdicts: Vec<Verdict>,
    pub events: Vec<SecurityEvent>,
    pub extraction: Extraction,
}

pub fn classify(model: &ModelFile, extraction: Extraction) -> Result<Detection, IdsError> {
    model.check()?;
    let mut verdicts = Vec::with_capacity(extraction.vectors.len());
    for fv in &extraction.vectors {
        let (label, scores) = model.classify(&fv.values)?;
        let score = scores[label.index()];
        verdicts.push(Verdict { flow: fv.clone(), label, score });
    }
    let events = verdicts
        .iter()
        .filter(|v| v.label.is_attack())
        .map(|v| SecurityEvent::from_flow(&v.flow, v.label, v.score))
        .collect();
    Ok(Detection { verdicts, events, extraction })
}

/// Runs the full pipeline over one capture.
pub fn detect(pcap: impl AsRef<Path>, model: &ModelFile) -> Result<Detection, IdsError> {
    let pcap = pcap.as_ref();
    let extraction = extract_pcap(pcap).map_err(|e| IdsError::Input(format!("{}: {e}", pcap.display())))?;
    let d = classify(model, extraction)?;
    let s = &d.extraction.decode_stats;
    log::info!(
        "{}: {} packets decoded, {} skipped, {} flows, {} events",
        pcap.display(),
        s.decoded,
        s.non_ipv4 + s.vlan + s.ipv6 + s.non_tcp + s.udp + s.fragments + s.malformed,
        d.verdicts.len(),
        d.events.len()
    );
    Ok(d)
}

pub fn write_audit_to<W: Write>(writer: W, verdicts: &[Verdict]) -> Result<(), IdsError> {
    let flows: Vec<FeatureVector> = verdicts.iter().map(|v| v.flow.clone()).collect();
    write_feature_csv_to(writer, &flows, &AUDIT_COLUMNS, |i, _| {
        vec![verdicts[i].label.to_string(), format_number(verdicts[i].score)]
    })?;
    Ok(())
}

pub fn write_audit(path: impl AsRef<Path>, verdicts: &[Verdict]) -> Result<(), IdsError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| IdsError::Input(format!("{}: {e}", path.display())))?;
    write_audit_to(BufWriter::new(f), verdicts)
}

/// Detects, writes the audit CSV and forwards every event to `sink`.
pub fn detect_file(
    pcap: &Path,
    model: &ModelFile,
    audit: &Path,
    sink: Option<&SyslogSink>,
) -> Result<Detection, IdsError> {
    let d = detect(pcap, model)?;
    write_audit(audit, &d.verdicts)?;
    if let Some(sink) = sink {
        for e in &d.events {
            sink.emit(e).map_err(|err| IdsError::Input(format!("syslog: {err}")))?;
        }
    }
    Ok(d)
}

/// `<dir>/<capture stem>.audit.csv`
pub fn audit_path_in(dir: &Path, pcap: &Path) -> PathBuf {
    let stem = pcap.file_stem().map_or_else(|| "capture".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}.audit.csv"))
}

/// Processes several captures on independent workers.
pub fn detect_many(
    pcaps: &[PathBuf],
    model: &ModelFile,
    audit_dir: &Path,
    sink: Option<&SyslogSink>,
    workers: usize,
) -> Vec<(PathBuf, Result<Detection, IdsError>)> {
    let workers = workers.max(1).min(pcaps.len().max(1));
    let chunk = pcaps.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = pcaps
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| (p.clone(), detect_file(p, model, &audit_path_in(audit_dir, p), sink)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("detection worker panicked")).collect()
    })
}
