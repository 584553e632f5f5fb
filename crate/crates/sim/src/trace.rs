//! Simulated traces and the four attack injectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use flowguard_core::pcap::PcapWriter;
use flowguard_core::truth::{self, TruthError, TruthRecord};
use flowguard_core::DecodedPacket;

use crate::config::{AttackConfig, AttackKind, ConfigError, SimConfig};
use crate::plan::{plan, Scenario};
use crate::render::{render, InjectionReport};

/// Time-ordered packets of a run together with their ground truth.
#[derive(Debug, Clone)]
pub struct PacketTrace {
    pub packets: Vec<DecodedPacket>,
    pub truth: Vec<TruthRecord>,
    /// One entry per injected attack, in injection order.
    pub reports: Vec<InjectionReport>,
    scenario: Scenario,
    attacks: Vec<AttackConfig>,
}

impl PacketTrace {
    /// Renders a hand-built or modified scenario without attacks.
    pub fn from_scenario(scenario: Scenario) -> Self {
        Self::build(scenario, Vec::new())
    }

    fn build(scenario: Scenario, attacks: Vec<AttackConfig>) -> Self {
        let r = render(&scenario, &attacks);
        PacketTrace { packets: r.packets, truth: r.truth, reports: r.reports, scenario, attacks }
    }

    pub fn config(&self) -> &SimConfig {
        &self.scenario.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn attacks(&self) -> &[AttackConfig] {
        &self.attacks
    }

    /// Serializes the packets as a classic PCAP file image.
    pub fn pcap_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pcap_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn write_pcap_to<W: Write>(&self, writer: W) -> io::Result<()> {
        let mut w = PcapWriter::new(writer)?;
        // IP identification increments per sending host.
        let mut ip_ids: HashMap<Ipv4Addr, u16> = HashMap::new();
        for p in &self.packets {
            let id = ip_ids.entry(p.src_ip).or_insert(0);
            *id = id.wrapping_add(1);
            w.write_packet(p.timestamp, &p.to_frame(*id))?;
        }
        w.flush()
    }

    pub fn write_truth_to<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        truth::write_truth_to(writer, &self.truth)
    }
}

/// Benign traffic only; attacks listed in `cfg` are ignored.
pub fn simulate_benign(cfg: &SimConfig) -> Result<PacketTrace, ConfigError> {
    let cfg = SimConfig { attacks: Vec::new(), ..cfg.clone() };
    cfg.validate()?;
    Ok(PacketTrace::build(plan(&cfg), Vec::new()))
}

/// Benign traffic with every attack of `cfg` injected.
pub fn simulate(cfg: &SimConfig) -> Result<PacketTrace, ConfigError> {
    cfg.validate()?;
    let trace = PacketTrace::build(plan(cfg), cfg.attacks.clone());
    for r in &trace.reports {
        warn_if_empty(r);
    }
    Ok(trace)
}

fn warn_if_empty(r: &InjectionReport) {
    if r.hits == 0 {
        log::warn!(
            "{} window [{}, {}) matched no traffic; nothing was injected",
            r.attack.kind.class(),
            r.attack.start,
            r.attack.end
        );
    }
}

/// Adds one attack to a trace and regenerates it. Traffic outside the
/// attack's reach is reproduced exactly.
pub fn inject(trace: &PacketTrace, attack: AttackConfig) -> Result<PacketTrace, ConfigError> {
    let mut cfg = trace.scenario.config.clone();
    cfg.attacks = trace.attacks.clone();
    cfg.attacks.push(attack);
    cfg.validate()?;
    let attacks = cfg.attacks.clone();
    let out = PacketTrace::build(trace.scenario.clone(), attacks);
    warn_if_empty(out.reports.last().expect("attack just added"));
    Ok(out)
}

/// Rewrites every schedule-period limit of SetChargingProfile requests sent
/// during `[start, end)`.
pub fn inject_profile_manipulation(
    trace: &PacketTrace,
    start: f64,
    end: f64,
    injected_limit: f64,
) -> Result<PacketTrace, ConfigError> {
    inject(trace, AttackConfig { start, end, kind: AttackKind::ProfileManipulation { injected_limit } })
}

/// Replaces the idTag of RemoteStartTransaction requests sent during
/// `[start, end)` with an unknown tag.
pub fn inject_denial_of_charge(trace: &PacketTrace, start: f64, end: f64) -> Result<PacketTrace, ConfigError> {
    inject(trace, AttackConfig { start, end, kind: AttackKind::DenialOfCharge })
}

/// Adds bots that hold accepted sessions and send Heartbeats every
/// `heartbeat_period` seconds.
pub fn inject_heartbeat_flood(
    trace: &PacketTrace,
    start: f64,
    end: f64,
    bot_count: usize,
    heartbeat_period: f64,
) -> Result<PacketTrace, ConfigError> {
    inject(trace, AttackConfig { start, end, kind: AttackKind::HeartbeatFlood { bot_count, heartbeat_period } })
}

/// Adds bots that retry WebSocket upgrades with unknown station IDs every
/// `retry_period` seconds.
pub fn inject_unauthorized_access(
    trace: &PacketTrace,
    start: f64,
    end: f64,
    bot_count: usize,
    retry_period: f64,
) -> Result<PacketTrace, ConfigError> {
    inject(trace, AttackConfig { start, end, kind: AttackKind::UnauthorizedAccess { bot_count, retry_period } })
}

pub fn write_pcap(trace: &PacketTrace, path: impl AsRef<Path>) -> io::Result<()> {
    trace.write_pcap_to(BufWriter::new(File::create(path)?))
}

pub fn write_truth(trace: &PacketTrace, path: impl AsRef<Path>) -> Result<(), TruthError> {
    truth::write_truth(path, &trace.truth)
}
