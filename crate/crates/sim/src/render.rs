//! Turns a scenario plus active attacks into packets and ground truth.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use flowguard_core::flow::Endpoint;
use flowguard_core::truth::TruthRecord;
use flowguard_core::{DecodedPacket, Timestamp, TrafficClass};

use crate::config::{AttackConfig, AttackKind, SimConfig};
use crate::messages as msg;
use crate::plan::{
    csms_endpoint, ephemeral_base, ephemeral_port, host_ip, EventKind, Scenario, StationPlan, Transaction,
    BOT_HOST_OFFSET,
};
use crate::rng::{derive, hex_string, tag, SimRng};
use crate::session::Session;
use crate::tcp::{Side, TcpConn};

/// What one attack did to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub attack: AttackConfig,
    /// Manipulated messages (FDI attacks) or bot connections (bot attacks).
    pub hits: usize,
    /// Distinct TCP connections carrying attack traffic.
    pub connections: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Rendered {
    pub packets: Vec<DecodedPacket>,
    pub truth: Vec<TruthRecord>,
    pub reports: Vec<InjectionReport>,
}

struct Output {
    base: Timestamp,
    conns: Vec<Vec<DecodedPacket>>,
    truth: Vec<TruthRecord>,
    hits: Vec<usize>,
    attack_conns: Vec<BTreeSet<(Endpoint, u64)>>,
}

impl Output {
    fn ts(&self, t: f64) -> Timestamp {
        self.base.add_micros((t * 1e6).round() as i64)
    }

    fn record(&mut self, client: Endpoint, server: Endpoint, start: f64, end: f64, label: TrafficClass, hub: usize) {
        self.truth.push(TruthRecord {
            client_ip: client.ip,
            client_port: client.port,
            server_ip: server.ip,
            server_port: server.port,
            start: self.ts(start),
            end: self.ts(end),
            label,
            hub,
        });
    }

    /// Stores a finished connection's packets and its session-long truth
    /// record; returns false when nothing of it was captured.
    fn finish(&mut self, conn: TcpConn, label: TrafficClass, hub: usize) -> bool {
        let (Some(first), Some(last)) = (conn.first_ts, conn.last_ts) else {
            return false;
        };
        self.record(conn.client(), conn.server(), first, last, label, hub);
        self.conns.push(conn.packets);
        true
    }
}

fn host(server: Endpoint) -> String {
    format!("{}:{}", server.ip, server.port)
}

struct TxState {
    spec: Transaction,
    transaction_id: i64,
    started: f64,
    meter_start: f64,
}

struct StationState {
    registers: [f64; 2],
    active: HashMap<usize, TxState>,
    next_transaction_id: i64,
}

impl StationState {
    fn energy(&self, tx: &TxState, t: f64) -> f64 {
        (tx.meter_start + tx.spec.power_w * (t - tx.started).max(0.0) / 3600.0).floor()
    }

    fn soc(tx: &TxState, energy: f64) -> f64 {
        (tx.spec.start_soc + 100.0 * (energy - tx.meter_start) / tx.spec.capacity_wh).min(100.0).floor()
    }
}

/// An attack hit inside a station session: label the given interval.
struct Hit {
    attack: usize,
    sent: f64,
    done: f64,
}

fn active_attack(attacks: &[AttackConfig], t: f64, want: fn(&AttackKind) -> bool) -> Option<usize> {
    attacks.iter().position(|a| want(&a.kind) && a.contains(t))
}

fn tampered_tag(cfg: &SimConfig, station: usize, tx: usize, registry: &crate::plan::Registry) -> String {
    let mut rng = derive(cfg.seed, &[tag::TAMPER, station as u64, tx as u64]);
    loop {
        let candidate = hex_string(&mut rng, 8);
        if !registry.id_tags.contains(&candidate) {
            return candidate;
        }
    }
}

struct StationCtx<'a> {
    sc: &'a Scenario,
    st: &'a StationPlan,
    attacks: &'a [AttackConfig],
}

impl StationCtx<'_> {
    fn event(
        &self,
        s: &mut Session,
        state: &mut StationState,
        start: f64,
        kind: &EventKind,
        hits: &mut Vec<Hit>,
    ) -> f64 {
        let cfg = &self.sc.config;
        let registry = &self.sc.registry;
        let start = start.max(s.clock());
        match kind {
            EventKind::RemoteStart { tx, spec } => {
                let attack = active_attack(self.attacks, start, |k| matches!(k, AttackKind::DenialOfCharge));
                let id_tag = match attack {
                    Some(_) => tampered_tag(cfg, self.st.global, *tx, registry),
                    None => spec.id_tag.clone(),
                };
                let c = spec.connector;
                let ex = s.call(start, Side::Server, "RemoteStartTransaction", msg::remote_start(c, &id_tag), |_| {
                    msg::status("Accepted")
                });
                let status = registry.authorization(&id_tag);
                let mut t = ex.done + s.rng().gen_range(0.05..0.3);
                if cfg.authorize_remote_tx {
                    let auth = s.call(t, Side::Client, "Authorize", msg::authorize(&id_tag), |_| msg::id_tag_info(status));
                    if status != "Accepted" {
                        if let Some(a) = attack {
                            hits.push(Hit { attack: a, sent: ex.sent, done: auth.done });
                        }
                        return auth.done;
                    }
                    t = auth.done + s.think(Side::Client);
                }
                let meter_start = state.registers[c as usize - 1];
                let transaction_id = state.next_transaction_id;
                state.next_transaction_id += 1;
                let now = s.timestamp(t);
                let st = s.call(
                    t,
                    Side::Client,
                    "StartTransaction",
                    msg::start_transaction(c, &id_tag, meter_start as i64, now),
                    |_| msg::start_transaction_conf(status, transaction_id),
                );
                if status != "Accepted" {
                    let t = st.done + s.think(Side::Client);
                    let now = s.timestamp(t);
                    let stop = s.call(
                        t,
                        Side::Client,
                        "StopTransaction",
                        msg::stop_transaction(transaction_id, &id_tag, meter_start as i64, now, "DeAuthorized"),
                        |_| json!({}),
                    );
                    if let Some(a) = attack {
                        hits.push(Hit { attack: a, sent: ex.sent, done: stop.done });
                    }
                    return stop.done;
                }
                state.active.insert(
                    *tx,
                    TxState {
                        spec: Transaction { id_tag, ..spec.clone() },
                        transaction_id,
                        started: st.sent,
                        meter_start,
                    },
                );
                let t = st.done + s.think(Side::Client);
                let now = s.timestamp(t);
                s.call(t, Side::Client, "StatusNotification", msg::status_notification(c, "Charging", now), |_| {
                    json!({})
                })
                .done
            }
            EventKind::Meter { tx } => {
                let Some(txs) = state.active.get(tx) else { return start };
                let energy = state.energy(txs, start);
                let soc = StationState::soc(txs, energy);
                let watts = txs.spec.power_w * s.rng().gen_range(0.97..1.0);
                let payload = msg::meter_values(
                    txs.spec.connector,
                    txs.transaction_id,
                    s.timestamp(start),
                    energy as i64,
                    soc as i64,
                    watts.round() as i64,
                );
                s.call(start, Side::Client, "MeterValues", payload, |_| json!({})).done
            }
            EventKind::Stop { tx } => {
                let Some(txs) = state.active.remove(tx) else { return start };
                let energy = state.energy(&txs, start);
                let c = txs.spec.connector;
                state.registers[c as usize - 1] = energy;
                let payload =
                    msg::stop_transaction(txs.transaction_id, &txs.spec.id_tag, energy as i64, s.timestamp(start), "Local");
                let ex = s.call(start, Side::Client, "StopTransaction", payload, |_| msg::id_tag_info("Accepted"));
                let t = ex.done + s.think(Side::Client);
                let now = s.timestamp(t);
                s.call(t, Side::Client, "StatusNotification", msg::status_notification(c, "Available", now), |_| {
                    json!({})
                })
                .done
            }
            EventKind::ChargingProfile { connector, profile_id, limits, min_rate } => {
                let mut payload = msg::set_charging_profile(*connector, *profile_id, limits, *min_rate);
                let attack = active_attack(self.attacks, start, |k| {
                    matches!(k, AttackKind::ProfileManipulation { .. })
                });
                if let Some(a) = attack {
                    if let AttackKind::ProfileManipulation { injected_limit } = self.attacks[a].kind {
                        msg::rewrite_profile_limits(&mut payload, injected_limit);
                    }
                }
                let ex = s.call(start, Side::Server, "SetChargingProfile", payload, |_| msg::status("Accepted"));
                if let Some(a) = attack {
                    hits.push(Hit { attack: a, sent: ex.sent, done: ex.done });
                }
                ex.done
            }
            EventKind::Unlock { connector } => {
                s.call(start, Side::Server, "UnlockConnector", msg::unlock_connector(*connector), |_| {
                    msg::status("Unlocked")
                })
                .done
            }
        }
    }
}

/// Boots a freshly upgraded session; returns when the station has the
/// BootNotification response.
fn boot(s: &mut Session, ready: f64, station: &str, serial: &str, interval: f64) -> f64 {
    let t = ready + s.think(Side::Client);
    s.call(t, Side::Client, "BootNotification", msg::boot_notification(station, serial), |now| {
        msg::boot_conf(now, interval)
    })
    .done
}

fn render_station(sc: &Scenario, st: &StationPlan, attacks: &[AttackConfig], out: &mut Output) {
    let cfg = &sc.config;
    let duration = cfg.duration;
    let ctx = StationCtx { sc, st, attacks };
    let mut state = StationState {
        registers: st.registers,
        active: HashMap::new(),
        next_transaction_id: (st.global as i64 + 1) * 10_000,
    };
    let mut next_event = 0;
    let mut t_open = st.first_open;
    let mut k = 0usize;
    while t_open < duration {
        let mut srng: SimRng = derive(cfg.seed, &[tag::SESSION, st.global as u64, k as u64]);
        let planned_close = cfg
            .session_lifetime
            .map(|m| t_open + srng.gen_range(0.5 * m..1.5 * m))
            .unwrap_or(f64::INFINITY);
        let gap = srng.gen_range(1.0..4.0);
        let client = Endpoint::new(st.ip, ephemeral_port(st.port_base, k));
        let isn = (srng.gen(), srng.gen());
        let conn = TcpConn::new(client, st.csms, isn, st.latency, out.ts(0.0), duration);
        let mut s = Session::new(conn, srng, out.ts(0.0));

        let ready = s.upgrade(t_open, &format!("/ocpp/{}", st.id), &host(st.csms));
        let mut cursor = boot(&mut s, ready, &st.id, &format!("SN-{}", st.id), cfg.heartbeat_interval);
        let mut hb_next = cursor + s.think(Side::Client);
        let mut ping_next = t_open + cfg.ping_interval;
        let mut hits = Vec::new();
        loop {
            let ev_t = st.events.get(next_event).map_or(f64::INFINITY, |e| e.t);
            let next = hb_next.min(ping_next).min(ev_t);
            if next >= planned_close || next >= duration {
                break;
            }
            let start = next.max(cursor);
            if start >= duration {
                break;
            }
            cursor = if next == hb_next {
                hb_next += cfg.heartbeat_interval;
                s.call(start, Side::Client, "Heartbeat", json!({}), msg::heartbeat_conf).done
            } else if next == ping_next {
                ping_next += cfg.ping_interval;
                s.ping(start)
            } else {
                let e = &st.events[next_event];
                next_event += 1;
                ctx.event(&mut s, &mut state, start, &e.kind, &mut hits)
            };
        }
        let end = if planned_close < duration {
            s.close(planned_close.max(cursor))
        } else {
            s.conn.flush();
            duration
        };
        let (client, server) = (s.conn.client(), s.conn.server());
        for h in &hits {
            out.hits[h.attack] += 1;
            out.attack_conns[h.attack].insert((client, k as u64));
            out.record(client, server, h.sent, h.done.min(end), attacks[h.attack].kind.class(), st.hub);
        }
        out.finish(s.conn, TrafficClass::Normal, st.hub);
        t_open = end + gap;
        k += 1;
    }
}

/// Bot sessions of the flooding and unauthorized-access attacks.
fn render_bots(sc: &Scenario, attacks: &[AttackConfig], out: &mut Output) {
    let cfg = &sc.config;
    let mut bot_serial = 0u32;
    for (a, attack) in attacks.iter().enumerate() {
        let (bot_count, class) = match attack.kind {
            AttackKind::HeartbeatFlood { bot_count, .. } | AttackKind::UnauthorizedAccess { bot_count, .. } => {
                (bot_count, attack.kind.class())
            }
            _ => continue,
        };
        for b in 0..bot_count {
            let hub_idx = b % cfg.hubs.len();
            let hub = &cfg.hubs[hub_idx];
            let server = csms_endpoint(hub);
            let ip = host_ip(hub.base_ip, BOT_HOST_OFFSET + bot_serial % 55);
            bot_serial += 1;
            let mut rng = derive(cfg.seed, &[tag::BOT, a as u64, b as u64]);
            let latency = rng.gen_range(0.001..0.01);
            let port_base = ephemeral_base(&mut rng);
            match attack.kind {
                AttackKind::HeartbeatFlood { heartbeat_period, .. } => {
                    // A spoofed but registered identity, so the upgrade succeeds.
                    let victim = sc
                        .stations
                        .iter()
                        .filter(|s| s.hub == hub_idx)
                        .nth(b / cfg.hubs.len() % hub.stations)
                        .map(|s| s.id.clone())
                        .unwrap_or_else(|| sc.stations[0].id.clone());
                    let open = attack.start + rng.gen_range(0.0..(attack.end - attack.start).min(1.0) * 0.5);
                    let client = Endpoint::new(ip, ephemeral_port(port_base, 0));
                    let isn = (rng.gen(), rng.gen());
                    let conn = TcpConn::new(client, server, isn, latency, out.ts(0.0), cfg.duration);
                    let mut s = Session::new(conn, rng, out.ts(0.0));
                    let ready = s.upgrade(open, &format!("/ocpp/{victim}"), &host(server));
                    let mut cursor = boot(&mut s, ready, &victim, &format!("SN-{victim}"), cfg.heartbeat_interval);
                    let mut next = cursor + s.think(Side::Client);
                    while next < attack.end && next < cfg.duration {
                        cursor = s.call(next.max(cursor), Side::Client, "Heartbeat", json!({}), msg::heartbeat_conf).done;
                        next += heartbeat_period;
                    }
                    if attack.end.max(cursor) < cfg.duration {
                        s.close(attack.end.max(cursor));
                    } else {
                        s.conn.flush();
                    }
                    let client = s.conn.client();
                    if out.finish(s.conn, class, hub_idx) {
                        out.hits[a] += 1;
                        out.attack_conns[a].insert((client, 0));
                    }
                }
                AttackKind::UnauthorizedAccess { retry_period, .. } => {
                    let mut j = 1usize;
                    loop {
                        let nominal = attack.start + j as f64 * retry_period;
                        if nominal > attack.end {
                            break;
                        }
                        let t = nominal + b as f64 * 0.003 + rng.gen_range(0.0..0.002);
                        let client = Endpoint::new(ip, ephemeral_port(port_base, j));
                        let isn = (rng.gen(), rng.gen());
                        let unknown = format!("EVCS-{}", hex_string(&mut rng, 6));
                        let srng = derive(cfg.seed, &[tag::BOT, a as u64, b as u64, j as u64]);
                        let conn = TcpConn::new(client, server, isn, latency, out.ts(0.0), cfg.duration);
                        let mut s = Session::new(conn, srng, out.ts(0.0));
                        debug_assert!(!sc.registry.knows_station(&unknown));
                        s.rejected_upgrade(t, &format!("/ocpp/{unknown}"), &host(server));
                        if out.finish(s.conn, class, hub_idx) {
                            out.hits[a] += 1;
                            out.attack_conns[a].insert((client, j as u64));
                        }
                        j += 1;
                    }
                }
                _ => unreachable!(),
            }
        }
    }
}

pub fn render(sc: &Scenario, attacks: &[AttackConfig]) -> Rendered {
    let mut out = Output {
        base: Timestamp::from_parts(sc.config.start_time, 0),
        conns: Vec::new(),
        truth: Vec::new(),
        hits: vec![0; attacks.len()],
        attack_conns: vec![BTreeSet::new(); attacks.len()],
    };
    for st in &sc.stations {
        render_station(sc, st, attacks, &mut out);
    }
    render_bots(sc, attacks, &mut out);

    let mut packets: Vec<DecodedPacket> = out.conns.into_iter().flatten().collect();
    packets.sort_by_key(|p| p.timestamp);
    let mut truth = out.truth;
    truth.sort_by_key(|x| (x.start, x.key(), x.label));
    let reports = attacks
        .iter()
        .enumerate()
        .map(|(i, a)| InjectionReport { attack: a.clone(), hits: out.hits[i], connections: out.attack_conns[i].len() })
        .collect();
    Rendered { packets, truth, reports }
}
