//! Benign activity plans: what each station does and when, before any
//! packets are rendered.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use rand::Rng;

use flowguard_core::flow::Endpoint;

use crate::config::{HubConfig, SimConfig};
use crate::rng::{derive, exp_interval, hex_string, round1, tag};

/// Offset of the first station address within a hub's subnet.
pub const STATION_HOST_OFFSET: u32 = 10;
/// Offset of the first attack-bot address within a hub's subnet.
pub const BOT_HOST_OFFSET: u32 = 200;

pub fn host_ip(base: Ipv4Addr, offset: u32) -> Ipv4Addr {
    Ipv4Addr::from(u32::from(base).wrapping_add(offset))
}

pub fn csms_endpoint(hub: &HubConfig) -> Endpoint {
    Endpoint::new(hub.csms_ip, hub.csms_port)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub connector: u32,
    pub id_tag: String,
    pub power_w: f64,
    pub start_soc: f64,
    pub capacity_wh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Central system asks the station to start charging.
    RemoteStart { tx: usize, spec: Transaction },
    Meter { tx: usize },
    Stop { tx: usize },
    ChargingProfile { connector: u32, profile_id: i64, limits: Vec<f64>, min_rate: Option<f64> },
    Unlock { connector: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedEvent {
    /// Seconds since the start of the run.
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationPlan {
    pub hub: usize,
    /// Position within the hub.
    pub index: usize,
    /// Position across all hubs; used to derive random streams.
    pub global: usize,
    pub id: String,
    pub ip: Ipv4Addr,
    pub csms: Endpoint,
    pub latency: f64,
    pub first_open: f64,
    pub port_base: u16,
    /// Energy import register per connector at the start of the run (Wh).
    pub registers: [f64; 2],
    pub id_tags: Vec<String>,
    pub events: Vec<PlannedEvent>,
}

pub fn station_id(hub: usize, index: usize) -> String {
    format!("EVCS-{}-{:02}", hub + 1, index + 1)
}

/// Draws an ephemeral source port base leaving room for sequential use.
pub fn ephemeral_base(rng: &mut impl Rng) -> u16 {
    rng.gen_range(49_152..60_000)
}

/// Wraps `base + k` inside the ephemeral range.
pub fn ephemeral_port(base: u16, k: usize) -> u16 {
    let span = 65_535 - 49_152;
    49_152 + ((usize::from(base - 49_152) + k) % span) as u16
}

pub fn plan_station(cfg: &SimConfig, hub: usize, index: usize, global: usize) -> StationPlan {
    let h = &cfg.hubs[hub];
    let mut rng = derive(cfg.seed, &[tag::STATION, global as u64]);
    let latency = rng.gen_range(0.0005..0.003);
    let first_open = rng.gen_range(0.5..5.0);
    let port_base = ephemeral_base(&mut rng);
    let registers = [rng.gen_range(100_000.0..5_000_000.0f64).round(), rng.gen_range(100_000.0..5_000_000.0f64).round()];
    let mut tag_rng = derive(cfg.seed, &[tag::TAGS, global as u64]);
    let id_tags: Vec<String> = (0..3).map(|_| hex_string(&mut tag_rng, 8)).collect();

    let mut events = Vec::new();
    let duration = cfg.duration;

    // Transactions: a Poisson process over the run, one per free connector.
    let mut busy_until = [0.0f64; 2];
    let mut t = 0.0;
    let mut tx = 0usize;
    loop {
        t += exp_interval(&mut rng, cfg.transaction_rate / 3600.0);
        if t >= duration {
            break;
        }
        let (tx_lo, tx_hi) = cfg.transaction_duration;
        let length = rng.gen_range(tx_lo..=tx_hi);
        let spec = Transaction {
            connector: 0,
            id_tag: id_tags[rng.gen_range(0..id_tags.len())].clone(),
            power_w: rng.gen_range(3_700.0..22_000.0f64).round(),
            start_soc: rng.gen_range(10.0..60.0f64).round(),
            capacity_wh: rng.gen_range(40_000.0..80_000.0f64).round(),
        };
        let Some(slot) = (0..2).find(|&c| busy_until[c] <= t) else { continue };
        busy_until[slot] = t + length + 60.0;
        let spec = Transaction { connector: slot as u32 + 1, ..spec };
        events.push(PlannedEvent { t, kind: EventKind::RemoteStart { tx, spec } });
        let mut k = 1;
        while t + k as f64 * cfg.meter_interval < (t + length).min(duration) {
            events.push(PlannedEvent { t: t + k as f64 * cfg.meter_interval, kind: EventKind::Meter { tx } });
            k += 1;
        }
        if t + length < duration {
            events.push(PlannedEvent { t: t + length, kind: EventKind::Stop { tx } });
        }
        tx += 1;
    }

    let (lo, hi) = cfg.benign_limit_range;
    let mut t = 0.0;
    let mut profile_id = 1;
    loop {
        t += exp_interval(&mut rng, cfg.charging_profile_rate / 3600.0);
        if t >= duration {
            break;
        }
        let periods = rng.gen_range(1..=2);
        let limits: Vec<f64> = (0..periods).map(|_| round1(rng.gen_range(lo..=hi))).collect();
        let min_rate = rng.gen_bool(0.5).then(|| round1(rng.gen_range(0.25 * lo..=0.75 * lo)));
        let connector = rng.gen_range(1..=2);
        events.push(PlannedEvent {
            t,
            kind: EventKind::ChargingProfile { connector, profile_id, limits, min_rate },
        });
        profile_id += 1;
    }

    let mut t = 0.0;
    loop {
        t += exp_interval(&mut rng, cfg.unlock_connector_rate / 3600.0);
        if t >= duration {
            break;
        }
        let connector = rng.gen_range(1..=2);
        events.push(PlannedEvent { t, kind: EventKind::Unlock { connector } });
    }

    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    StationPlan {
        hub,
        index,
        global,
        id: station_id(hub, index),
        ip: host_ip(h.base_ip, STATION_HOST_OFFSET + index as u32),
        csms: csms_endpoint(h),
        latency,
        first_open,
        port_base,
        registers,
        id_tags,
        events,
    }
}

/// The central system's registry: which stations may connect and which
/// idTags are authorised.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub stations: BTreeSet<String>,
    pub id_tags: BTreeSet<String>,
}

impl Registry {
    pub fn knows_station(&self, id: &str) -> bool {
        self.stations.contains(id)
    }

    pub fn authorization(&self, id_tag: &str) -> &'static str {
        if self.id_tags.contains(id_tag) {
            "Accepted"
        } else {
            "Invalid"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub stations: Vec<StationPlan>,
    pub registry: Registry,
}

pub fn plan(cfg: &SimConfig) -> Scenario {
    let mut stations = Vec::new();
    for (hub, h) in cfg.hubs.iter().enumerate() {
        for index in 0..h.stations {
            let global = stations.len();
            stations.push(plan_station(cfg, hub, index, global));
        }
    }
    let mut registry = Registry::default();
    for s in &stations {
        registry.stations.insert(s.id.clone());
        registry.id_tags.extend(s.id_tags.iter().cloned());
    }
    Scenario { config: cfg.clone(), stations, registry }
}
