//! Simulation parameters and their file format.

use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use flowguard_core::TrafficClass;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One charging hub: a group of stations on a shared subnet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubConfig {
    pub stations: usize,
    /// Stations get `base_ip + 10 + i`, attack bots `base_ip + 200 + k`.
    pub base_ip: Ipv4Addr,
    pub csms_ip: Ipv4Addr,
    #[serde(default = "default_csms_port")]
    pub csms_port: u16,
}

fn default_csms_port() -> u16 {
    8080
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AttackKind {
    ProfileManipulation {
        #[serde(default = "default_injected_limit")]
        injected_limit: f64,
    },
    DenialOfCharge,
    HeartbeatFlood {
        #[serde(default = "default_bot_count")]
        bot_count: usize,
        #[serde(default = "default_heartbeat_period")]
        heartbeat_period: f64,
    },
    UnauthorizedAccess {
        #[serde(default = "default_bot_count")]
        bot_count: usize,
        #[serde(default = "default_retry_period")]
        retry_period: f64,
    },
}

fn default_injected_limit() -> f64 {
    80.0
}
fn default_bot_count() -> usize {
    5
}
fn default_heartbeat_period() -> f64 {
    1.0
}
fn default_retry_period() -> f64 {
    5.0
}

impl AttackKind {
    pub fn class(&self) -> TrafficClass {
        match self {
            AttackKind::ProfileManipulation { .. } => TrafficClass::ProfileManipulation,
            AttackKind::DenialOfCharge => TrafficClass::DenialOfCharge,
            AttackKind::HeartbeatFlood { .. } => TrafficClass::HeartbeatFlood,
            AttackKind::UnauthorizedAccess { .. } => TrafficClass::UnauthorizedAccess,
        }
    }
}

/// An attack active during `[start, end)` seconds of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackConfig {
    pub fn contains(&self, t_rel: f64) -> bool {
        t_rel >= self.start && t_rel < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub hubs: Vec<HubConfig>,
    /// Seconds of traffic to generate.
    pub duration: f64,
    #[serde(default = "default_heartbeat_interval")]
    pub heartbeat_interval: f64,
    /// Mean remote-started transactions per hour per station.
    #[serde(default = "default_transaction_rate")]
    pub transaction_rate: f64,
    /// Range of transaction lengths in seconds.
    #[serde(default = "default_transaction_duration")]
    pub transaction_duration: (f64, f64),
    /// Mean SetChargingProfile messages per hour per station.
    #[serde(default = "default_profile_rate")]
    pub charging_profile_rate: f64,
    /// Mean UnlockConnector requests per hour per station.
    #[serde(default = "default_unlock_rate")]
    pub unlock_connector_rate: f64,
    /// Mean WebSocket session lifetime before the station reconnects;
    /// absent means one persistent session per station.
    #[serde(default)]
    pub session_lifetime: Option<f64>,
    #[serde(default = "default_meter_interval")]
    pub meter_interval: f64,
    #[serde(default = "default_ping_interval")]
    pub ping_interval: f64,
    #[serde(default = "default_limit_range")]
    pub benign_limit_range: (f64, f64),
    /// Whether stations authorize remote-start idTags before starting.
    #[serde(default = "default_true")]
    pub authorize_remote_tx: bool,
    /// Unix time of the start of the run.
    #[serde(default = "default_start_time")]
    pub start_time: i64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub attacks: Vec<AttackConfig>,
}

fn default_heartbeat_interval() -> f64 {
    300.0
}
fn default_transaction_rate() -> f64 {
    2.0
}
fn default_transaction_duration() -> (f64, f64) {
    (900.0, 3600.0)
}
fn default_profile_rate() -> f64 {
    2.0
}
fn default_unlock_rate() -> f64 {
    0.2
}
fn default_meter_interval() -> f64 {
    60.0
}
fn default_ping_interval() -> f64 {
    90.0
}
fn default_limit_range() -> (f64, f64) {
    (8.0, 32.0)
}
fn default_true() -> bool {
    true
}
fn default_start_time() -> i64 {
    1_715_521_914
}

impl Default for SimConfig {
    /// Two hubs: a small 2-station site and a 10-station simulated site,
    /// both managed by one central system.
    fn default() -> Self {
        let csms_ip = Ipv4Addr::new(172, 16, 0, 10);
        SimConfig {
            hubs: vec![
                HubConfig { stations: 2, base_ip: Ipv4Addr::new(192, 168, 1, 0), csms_ip, csms_port: 8080 },
                HubConfig { stations: 10, base_ip: Ipv4Addr::new(192, 168, 2, 0), csms_ip, csms_port: 8080 },
            ],
            duration: 1800.0,
            heartbeat_interval: default_heartbeat_interval(),
            transaction_rate: default_transaction_rate(),
            transaction_duration: default_transaction_duration(),
            charging_profile_rate: default_profile_rate(),
            unlock_connector_rate: default_unlock_rate(),
            session_lifetime: None,
            meter_interval: default_meter_interval(),
            ping_interval: default_ping_interval(),
            benign_limit_range: default_limit_range(),
            authorize_remote_tx: true,
            start_time: default_start_time(),
            seed: 0,
            attacks: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn station_count(&self) -> usize {
        self.hubs.iter().map(|h| h.stations).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.hubs.is_empty() {
            return bad("at least one hub is required".into());
        }
        for (i, h) in self.hubs.iter().enumerate() {
            if h.stations == 0 {
                return bad(format!("hub {i} has no stations"));
            }
            if h.stations > 180 {
                return bad(format!("hub {i}: at most 180 stations fit the address plan"));
            }
        }
        for (name, v) in [
            ("heartbeat_interval", self.heartbeat_interval),
            ("meter_interval", self.meter_interval),
            ("ping_interval", self.ping_interval),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("transaction_rate", self.transaction_rate),
            ("charging_profile_rate", self.charging_profile_rate),
            ("unlock_connector_rate", self.unlock_connector_rate),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        let (tx_lo, tx_hi) = self.transaction_duration;
        if !(tx_lo >= 1.0 && tx_lo <= tx_hi) {
            return bad("transaction_duration must satisfy 1 <= min <= max".into());
        }
        if let Some(l) = self.session_lifetime {
            if !(l >= 10.0) {
                return bad("session_lifetime must be at least 10 s".into());
            }
        }
        let (lo, hi) = self.benign_limit_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("benign_limit_range must satisfy 0 < min <= max".into());
        }
        for a in &self.attacks {
            if !(a.start >= 0.0 && a.start < a.end && a.end <= self.duration) {
                return bad(format!("attack window [{}, {}) outside run", a.start, a.end));
            }
            match a.kind {
                AttackKind::ProfileManipulation { injected_limit } if injected_limit <= hi => {
                    return bad(format!("injected_limit {injected_limit} must exceed benign max {hi}"));
                }
                AttackKind::HeartbeatFlood { bot_count, heartbeat_period } => {
                    if bot_count == 0 || bot_count > 50 {
                        return bad("flood bot_count must be in 1..=50".into());
                    }
                    if !(heartbeat_period > 0.0 && heartbeat_period <= 1.0) {
                        return bad("flood heartbeat_period must be in (0, 1] s".into());
                    }
                }
                AttackKind::UnauthorizedAccess { bot_count, retry_period } => {
                    if bot_count == 0 || bot_count > 50 {
                        return bad("unauthorized-access bot_count must be in 1..=50".into());
                    }
                    if !(retry_period >= 0.05) {
                        return bad("retry_period must be at least 0.05 s".into());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
