#![allow(dead_code)]

pub mod oracle;
pub mod rfc5424;

use std::io::Cursor;

use flowguard_core::pcap::read_pcap_from;
use flowguard_core::{extract_packets, Extraction};
use flowguard_fl::dataset::label_vectors;
use flowguard_fl::Dataset;
use flowguard_sim::{AttackConfig, AttackKind, PacketTrace, SimConfig};

/// Two hubs (2 + 10 stations), 30 minutes, the four attacks in disjoint
/// windows. Sessions reconnect every ~40 s so there are enough flows.
pub fn scenario(seed: u64) -> SimConfig {
    SimConfig {
        duration: 1_800.0,
        session_lifetime: Some(40.0),
        heartbeat_interval: 30.0,
        transaction_rate: 12.0,
        transaction_duration: (120.0, 600.0),
        charging_profile_rate: 30.0,
        seed,
        attacks: vec![
            AttackConfig { start: 60.0, end: 480.0, kind: AttackKind::ProfileManipulation { injected_limit: 80.0 } },
            AttackConfig { start: 480.0, end: 900.0, kind: AttackKind::DenialOfCharge },
            AttackConfig {
                start: 900.0,
                end: 1_200.0,
                kind: AttackKind::HeartbeatFlood { bot_count: 5, heartbeat_period: 1.0 },
            },
            AttackConfig {
                start: 1_200.0,
                end: 1_500.0,
                kind: AttackKind::UnauthorizedAccess { bot_count: 5, retry_period: 20.0 },
            },
        ],
        ..SimConfig::default()
    }
}

/// Extraction through the PCAP file format, as the CLI would see it.
pub fn extract_trace(trace: &PacketTrace) -> Extraction {
    let cap = read_pcap_from(Cursor::new(trace.pcap_bytes())).expect("simulator output parses");
    extract_packets(&cap.packets)
}

pub fn labelled(trace: &PacketTrace) -> Dataset {
    label_vectors(&extract_trace(trace).vectors, &trace.truth, false).expect("truth joins")
}
