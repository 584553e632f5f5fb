//! Labeled OCPP 1.6-J traffic generator.
//!
//! A central management system and hubs of charging stations exchange
//! OCPP-J messages over WebSocket; attack injectors add profile
//! manipulation, denial of charge, heartbeat flooding and unauthorized
//! access traffic. Output is a packet trace plus a ground-truth table that
//! joins onto extracted flows.

pub mod config;
pub mod messages;
pub mod plan;
pub mod render;
pub mod rng;
pub mod session;
pub mod tcp;
pub mod trace;

pub use config::{AttackConfig, AttackKind, ConfigError, HubConfig, SimConfig};
pub use render::InjectionReport;
pub use trace::{
    inject, inject_denial_of_charge, inject_heartbeat_flood, inject_profile_manipulation,
    inject_unauthorized_access, simulate, simulate_benign, write_pcap, write_truth, PacketTrace,
};
