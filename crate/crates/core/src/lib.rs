//! Flow feature extraction for OCPP 1.6-J traffic.
//!
//! The pipeline is `pcap` → [`packet::decode_packet`] → [`flow::assemble_flows`]
//! → [`features::compute_features`], with [`csv_io`] and [`truth`] handling the
//! on-disk formats.

pub mod csv_io;
pub mod features;
pub mod flow;
pub mod http;
pub mod ocpp;
pub mod packet;
pub mod pcap;
pub mod reassembly;
pub mod time;
pub mod truth;
pub mod websocket;

use std::path::Path;

pub use features::{compute_features, FeatureVector, FEATURE_NAMES, FEATURE_SCHEMA_VERSION};
pub use flow::{assemble_flows, Flow, FlowKey};
pub use packet::{decode_packet, DecodedPacket, TcpFlags};
pub use pcap::{read_pcap, RawPacket};
pub use reassembly::Direction;
pub use time::Timestamp;
pub use truth::TrafficClass;

/// Output of running the extractor over one capture.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub vectors: Vec<FeatureVector>,
    pub decode_stats: packet::DecodeStats,
    pub truncated_records: usize,
    pub flows: usize,
}

/// Reads a capture and computes one feature vector per flow, sorted by
/// `(flow_start_timestamp, flow_id)`.
pub fn extract_pcap(path: impl AsRef<Path>) -> Result<Extraction, pcap::PcapError> {
    let capture = read_pcap(path)?;
    let mut ex = extract_packets(&capture.packets);
    ex.truncated_records = capture.truncated_records;
    Ok(ex)
}

pub fn extract_packets(raw: &[RawPacket]) -> Extraction {
    let (decoded, decode_stats) = packet::decode_all(raw);
    let flows = assemble_flows(decoded);
    let mut vectors: Vec<FeatureVector> = flows.iter().map(compute_features).collect();
    csv_io::sort_vectors(&mut vectors);
    Extraction { flows: flows.len(), vectors, decode_stats, truncated_records: 0 }
}
