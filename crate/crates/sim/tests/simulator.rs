mod common;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use flowguard_core::truth::{apply_labels, read_truth};
use flowguard_core::{extract_packets, FeatureVector, RawPacket, TrafficClass};
use flowguard_sim::plan::{plan, EventKind, PlannedEvent, Transaction};
use flowguard_sim::*;

fn one_station(duration: f64) -> SimConfig {
    SimConfig {
        hubs: vec![HubConfig {
            stations: 1,
            base_ip: Ipv4Addr::new(10, 1, 0, 0),
            csms_ip: Ipv4Addr::new(10, 0, 0, 1),
            csms_port: 8080,
        }],
        duration,
        transaction_rate: 0.0,
        charging_profile_rate: 0.0,
        unlock_connector_rate: 0.0,
        ..SimConfig::default()
    }
}

fn raws(trace: &PacketTrace) -> Vec<RawPacket> {
    trace.packets.iter().enumerate().map(|(i, p)| p.to_raw(i as u16)).collect()
}

fn labelled(trace: &PacketTrace) -> Vec<FeatureVector> {
    let mut v = extract_packets(&raws(trace)).vectors;
    let report = apply_labels(&mut v, &trace.truth);
    assert_eq!(report.unmatched, 0);
    v
}

fn feature(v: &FeatureVector, name: &str) -> f64 {
    v.get(name).unwrap_or_else(|| panic!("no feature {name}"))
}

/// A quiet single-station scenario with hand-placed events.
fn scripted(duration: f64, events: Vec<PlannedEvent>, tweak: impl FnOnce(&mut SimConfig)) -> PacketTrace {
    let mut cfg = one_station(duration);
    tweak(&mut cfg);
    let mut sc = plan(&cfg);
    sc.stations[0].events = events;
    PacketTrace::from_scenario(sc)
}

fn remote_start(t: f64, tx: usize, id_tag: &str) -> PlannedEvent {
    PlannedEvent {
        t,
        kind: EventKind::RemoteStart {
            tx,
            spec: Transaction {
                connector: 1,
                id_tag: id_tag.to_string(),
                power_w: 11_000.0,
                start_soc: 20.0,
                capacity_wh: 60_000.0,
            },
        },
    }
}

fn profile(t: f64, limits: &[f64]) -> PlannedEvent {
    PlannedEvent {
        t,
        kind: EventKind::ChargingProfile { connector: 1, profile_id: 1, limits: limits.to_vec(), min_rate: None },
    }
}

#[test]
fn heartbeat_calls_follow_configured_interval() {
    let trace = simulate_benign(&one_station(600.0)).unwrap();
    let msgs = common::messages(&trace.pcap_bytes());
    let hb = common::calls(&msgs, "Heartbeat");
    assert_eq!(hb.len(), 2, "heartbeats at {:?}", hb.iter().map(|m| m.ts).collect::<Vec<_>>());
    let start = trace.config().start_time as f64;
    assert!((hb[1].ts - hb[0].ts - 300.0).abs() < 0.5);
    assert!(hb[1].ts - start < 310.0);
    let boot = common::calls(&msgs, "BootNotification");
    assert_eq!(boot.len(), 1);
    let conf = common::result_of(&msgs, boot[0]).unwrap();
    assert_eq!(conf.payload()["interval"], 300);
    assert_eq!(conf.payload()["status"], "Accepted");
}

#[test]
fn upgrade_targets_station_path() {
    let trace = simulate_benign(&one_station(30.0)).unwrap();
    let segs = common::segments(&trace.pcap_bytes());
    let get = segs.iter().find(|s| s.payload.starts_with(b"GET ")).unwrap();
    let text = String::from_utf8_lossy(&get.payload);
    assert!(text.starts_with("GET /ocpp/EVCS-1-01 HTTP/1.1\r\n"));
    let resp = segs.iter().find(|s| s.payload.starts_with(b"HTTP/1.1 101")).unwrap();
    assert!(String::from_utf8_lossy(&resp.payload).contains("Upgrade: websocket"));
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = SimConfig { duration: 300.0, session_lifetime: Some(60.0), seed: 11, ..SimConfig::default() };
    cfg.attacks.push(AttackConfig {
        start: 100.0,
        end: 150.0,
        kind: AttackKind::HeartbeatFlood { bot_count: 2, heartbeat_period: 0.5 },
    });
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a.pcap_bytes(), b.pcap_bytes());
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.write_truth_to(&mut ta).unwrap();
    b.write_truth_to(&mut tb).unwrap();
    assert_eq!(ta, tb);
    cfg.seed = 12;
    assert_ne!(simulate(&cfg).unwrap().pcap_bytes(), a.pcap_bytes());
}

#[test]
fn authorization_precedes_start_transaction() {
    let cfg = SimConfig { transaction_rate: 30.0, transaction_duration: (200.0, 400.0), duration: 900.0, ..one_station(900.0) };
    let msgs = common::messages(&simulate_benign(&cfg).unwrap().pcap_bytes());
    let starts = common::calls(&msgs, "StartTransaction");
    assert!(!starts.is_empty());
    for st in starts {
        let auth = common::calls(&msgs, "Authorize")
            .into_iter()
            .filter(|a| a.ts < st.ts && a.payload()["idTag"] == st.payload()["idTag"])
            .next_back()
            .expect("Authorize before StartTransaction");
        let conf = common::result_of(&msgs, auth).unwrap();
        assert_eq!(conf.payload()["idTagInfo"]["status"], "Accepted");
        assert!(conf.ts <= st.ts);
        let rs = common::calls(&msgs, "RemoteStartTransaction");
        assert!(rs.iter().any(|r| r.ts < auth.ts && r.payload()["idTag"] == auth.payload()["idTag"]));
    }
}

#[test]
fn profile_manipulation_rewrites_limit_in_window_only() {
    let base = scripted(300.0, vec![profile(100.0, &[15.0])], |_| {});
    let hit = inject_profile_manipulation(&base, 50.0, 150.0, 80.0).unwrap();
    let miss = inject_profile_manipulation(&base, 200.0, 250.0, 80.0).unwrap();
    assert_eq!(hit.reports[0].hits, 1);
    assert_eq!(miss.reports[0].hits, 0);

    let limit = |t: &PacketTrace| {
        let msgs = common::messages(&t.pcap_bytes());
        common::calls(&msgs, "SetChargingProfile")[0].payload()["csChargingProfiles"]["chargingSchedule"]
            ["chargingSchedulePeriod"][0]["limit"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(limit(&hit), 80.0);
    assert_eq!(limit(&miss), 15.0);
    assert_eq!(miss.pcap_bytes(), base.pcap_bytes());

    let v = labelled(&hit);
    let attacked: Vec<_> = v.iter().filter(|f| f.label == "ProfileManipulation").collect();
    assert_eq!(attacked.len(), 1);
    assert_eq!(feature(attacked[0], "flow_max_ocpp16_setchargingprofile_limit"), 80.0);
    assert_eq!(feature(attacked[0], "flow_total_ocpp16_setchargingprofile_packets"), 1.0);
    assert!(labelled(&miss).iter().all(|f| f.label == "normal"));
}

#[test]
fn profile_manipulation_rewrites_every_period() {
    let base = scripted(300.0, vec![profile(100.0, &[10.0, 20.0])], |_| {});
    let hit = inject_profile_manipulation(&base, 50.0, 150.0, 80.0).unwrap();
    let msgs = common::messages(&hit.pcap_bytes());
    let periods = common::calls(&msgs, "SetChargingProfile")[0].payload()["csChargingProfiles"]["chargingSchedule"]
        ["chargingSchedulePeriod"]
        .clone();
    let limits: Vec<f64> = periods.as_array().unwrap().iter().map(|p| p["limit"].as_f64().unwrap()).collect();
    assert_eq!(limits, vec![80.0, 80.0]);
}

#[test]
fn payload_edit_keeps_tcp_consistent() {
    let base = scripted(300.0, vec![profile(100.0, &[15.0])], |_| {});
    let hit = inject_profile_manipulation(&base, 50.0, 150.0, 800.0).unwrap();
    // Every data segment starts where the previous one in its direction
    // ended, and the peer's next ACK covers it.
    let mut next: BTreeMap<(Ipv4Addr, u16), u32> = BTreeMap::new();
    for p in &hit.packets {
        let key = (p.src_ip, p.src_port);
        if let Some(&n) = next.get(&key) {
            assert_eq!(p.seq, n, "sequence continuity");
        }
        let len = p.payload.len() as u32
            + u32::from(p.flags.contains(flowguard_core::TcpFlags::SYN))
            + u32::from(p.flags.contains(flowguard_core::TcpFlags::FIN));
        next.insert(key, p.seq.wrapping_add(len));
    }
    for p in &hit.packets {
        if p.flags.contains(flowguard_core::TcpFlags::ACK) {
            let peer_next = next[&(p.dst_ip, p.dst_port)];
            assert!(peer_next.wrapping_sub(p.ack) as i32 >= 0, "ack beyond sent data");
        }
    }
}

#[test]
fn denial_of_charge_yields_invalid_authorization() {
    let tag = |t: &PacketTrace| t.scenario().stations[0].id_tags[0].clone();
    let base = scripted(300.0, vec![], |_| {});
    let id = tag(&base);
    let base = scripted(300.0, vec![remote_start(100.0, 0, &id)], |_| {});
    let hit = inject_denial_of_charge(&base, 90.0, 110.0).unwrap();
    assert_eq!(hit.reports[0].hits, 1);
    let msgs = common::messages(&hit.pcap_bytes());
    let auth = common::calls(&msgs, "Authorize");
    assert_eq!(auth.len(), 1);
    assert_ne!(auth[0].payload()["idTag"].as_str().unwrap(), id);
    assert_eq!(common::result_of(&msgs, auth[0]).unwrap().payload()["idTagInfo"]["status"], "Invalid");
    assert!(common::calls(&msgs, "StartTransaction").is_empty());

    let v = labelled(&hit);
    let attacked: Vec<_> = v.iter().filter(|f| f.label == "DenialOfCharge").collect();
    assert_eq!(attacked.len(), 1);
    assert_eq!(feature(attacked[0], "flow_total_ocpp16_authorize_not_accepted_packets"), 1.0);

    let out = inject_denial_of_charge(&base, 200.0, 250.0).unwrap();
    let msgs = common::messages(&out.pcap_bytes());
    let auth = common::calls(&msgs, "Authorize");
    assert_eq!(common::result_of(&msgs, auth[0]).unwrap().payload()["idTagInfo"]["status"], "Accepted");
    assert_eq!(common::calls(&msgs, "StartTransaction").len(), 1);
}

#[test]
fn denial_of_charge_without_remote_authorization() {
    let id = scripted(300.0, vec![], |_| {}).scenario().stations[0].id_tags[0].clone();
    let base = scripted(300.0, vec![remote_start(100.0, 0, &id)], |c| c.authorize_remote_tx = false);
    let hit = inject_denial_of_charge(&base, 90.0, 110.0).unwrap();
    let msgs = common::messages(&hit.pcap_bytes());
    assert!(common::calls(&msgs, "Authorize").is_empty());
    let st = common::calls(&msgs, "StartTransaction");
    assert_eq!(st.len(), 1);
    assert_eq!(common::result_of(&msgs, st[0]).unwrap().payload()["idTagInfo"]["status"], "Invalid");
    let stop = common::calls(&msgs, "StopTransaction");
    assert_eq!(stop[0].payload()["reason"], "DeAuthorized");
}

#[test]
fn heartbeat_flood_single_bot() {
    let base = simulate_benign(&one_station(60.0)).unwrap();
    let hit = inject_heartbeat_flood(&base, 20.0, 30.0, 1, 1.0).unwrap();
    let v = labelled(&hit);
    let flood: Vec<_> = v.iter().filter(|f| f.label == "HeartbeatFlood").collect();
    assert_eq!(flood.len(), 1);
    let hb = feature(flood[0], "flow_total_ocpp16_heartbeat_packets");
    assert!((9.0..=11.0).contains(&hb), "{hb} heartbeats");
}

#[test]
fn heartbeat_flood_bots_and_rate() {
    let base = simulate_benign(&one_station(120.0)).unwrap();
    let five = inject_heartbeat_flood(&base, 20.0, 80.0, 5, 1.0).unwrap();
    let v = labelled(&five);
    let flood: Vec<_> = v.iter().filter(|f| f.label == "HeartbeatFlood").collect();
    assert_eq!(flood.len(), 5);
    assert_eq!(five.reports[0].connections, 5);
    let benign_max = v
        .iter()
        .filter(|f| f.label == "normal")
        .map(|f| feature(f, "flow_total_ocpp16_heartbeat_packets"))
        .fold(0.0, f64::max);
    assert!(flood.iter().all(|f| feature(f, "flow_total_ocpp16_heartbeat_packets") > 10.0 * benign_max.max(1.0)));

    let rate = |period: f64| {
        let t = inject_heartbeat_flood(&base, 20.0, 80.0, 1, period).unwrap();
        let v = labelled(&t);
        let f = v.iter().find(|f| f.label == "HeartbeatFlood").unwrap().clone();
        feature(&f, "flow_websocket_packts_per_second")
    };
    let ratio = rate(0.1) / rate(1.0);
    assert!((8.0..=12.0).contains(&ratio), "rate ratio {ratio}");
}

#[test]
fn unauthorized_access_attempts() {
    let base = simulate_benign(&one_station(120.0)).unwrap();
    let hit = inject_unauthorized_access(&base, 10.0, 25.0, 1, 5.0).unwrap();
    assert_eq!(hit.reports[0].hits, 3);
    let v = labelled(&hit);
    let ua: Vec<_> = v.iter().filter(|f| f.label == "UnauthorizedAccess").collect();
    assert_eq!(ua.len(), 3);
    for f in ua {
        assert_eq!(feature(f, "flow_total_http_4xx_packets"), 1.0);
        assert_eq!(feature(f, "flow_total_http_get_packets"), 1.0);
        assert!(feature(f, "flow_total_FIN_flag") >= 2.0);
        assert_eq!(feature(f, "flow_total_websocket_data_messages"), 0.0);
    }
    let none = inject_unauthorized_access(&base, 10.0, 14.0, 1, 5.0).unwrap();
    assert_eq!(none.reports[0].hits, 0);
    assert!(labelled(&none).iter().all(|f| f.label == "normal"));
}

#[test]
fn files_round_trip_and_join() {
    let dir = tempfile::tempdir().unwrap();
    let (pcap, truth) = (dir.path().join("t.pcap"), dir.path().join("t.csv"));
    let cfg = SimConfig { duration: 400.0, session_lifetime: Some(45.0), ..SimConfig::default() };
    let benign = simulate_benign(&cfg).unwrap();
    write_pcap(&benign, &pcap).unwrap();
    write_truth(&benign, &truth).unwrap();
    let capture = flowguard_core::read_pcap(&pcap).unwrap();
    assert_eq!(capture.packets.len(), benign.packets.len());
    let mut ex = flowguard_core::extract_pcap(&pcap).unwrap();
    let truth_rows = read_truth(&truth).unwrap();
    assert_eq!(truth_rows, benign.truth);
    let report = apply_labels(&mut ex.vectors, &truth_rows);
    assert_eq!(report.unmatched, 0);
    assert!(ex.vectors.iter().all(|f| f.label == "normal"));

    let flood = inject_heartbeat_flood(&benign, 100.0, 350.0, 4, 1.0).unwrap();
    let v = labelled(&flood);
    let n = v.iter().filter(|f| f.label == "HeartbeatFlood").count();
    // Each bot session lasts the whole window and is cut every 120 s.
    let per_bot = (250.0f64 / 120.0).ceil() as usize;
    assert_eq!(flood.reports[0].connections, 4);
    assert_eq!(n, 4 * per_bot);
}

#[test]
fn every_call_answered_and_sessions_torn_down() {
    let cfg = SimConfig {
        duration: 600.0,
        session_lifetime: Some(60.0),
        transaction_rate: 20.0,
        transaction_duration: (120.0, 300.0),
        charging_profile_rate: 20.0,
        unlock_connector_rate: 10.0,
        ..SimConfig::default()
    };
    let trace = simulate_benign(&cfg).unwrap();
    let end = cfg.start_time as f64 + cfg.duration;
    let msgs = common::messages(&trace.pcap_bytes());
    for m in msgs.iter().filter(|m| m.kind() == 2) {
        if m.ts < end - 1.0 {
            assert!(common::result_of(&msgs, m).is_some(), "unanswered {:?}", m.value);
        }
    }
    let flows = flowguard_core::assemble_flows(trace.packets.clone());
    for f in &flows {
        if f.continuation {
            continue;
        }
        assert!(f.packets[0].packet.flags.contains(flowguard_core::TcpFlags::SYN));
        let last = &f.packets.last().unwrap().packet;
        let truncated = f.end_ts.as_secs_f64() > end - 130.0;
        if !truncated {
            assert_eq!(last.flags, flowguard_core::TcpFlags::ACK, "flow {} ends with final ACK", f.flow_id());
            let fins = f.packets.iter().filter(|p| p.packet.flags.contains(flowguard_core::TcpFlags::FIN)).count();
            assert_eq!(fins, 2);
        }
    }
}

#[test]
fn energy_register_never_decreases() {
    let cfg = SimConfig {
        duration: 1800.0,
        transaction_rate: 10.0,
        transaction_duration: (300.0, 900.0),
        ..SimConfig::default()
    };
    let trace = simulate_benign(&cfg).unwrap();
    let v = labelled(&trace);
    assert!(v.iter().any(|f| feature(f, "flow_total_ocpp16_metervalues") >= 2.0));
    for f in &v {
        assert!(feature(f, "flow_min_ocpp16_metervalues_wh_diff") >= 0.0);
    }
    let msgs = common::messages(&trace.pcap_bytes());
    let mut last: BTreeMap<(([u8; 4], u16), i64), f64> = BTreeMap::new();
    let mut by_station: BTreeMap<[u8; 4], BTreeMap<i64, f64>> = BTreeMap::new();
    for m in common::calls(&msgs, "MeterValues") {
        let c = m.payload()["connectorId"].as_i64().unwrap();
        let wh: f64 = m.payload()["meterValue"][0]["sampledValue"][0]["value"].as_str().unwrap().parse().unwrap();
        let prev = by_station.entry(m.client.0).or_default().insert(c, wh);
        assert!(prev.is_none_or(|p| p <= wh));
        last.insert((m.client, c), wh);
    }
    assert!(!last.is_empty());
}

#[test]
fn attack_flows_separable_by_threshold() {
    let mut cfg = SimConfig {
        duration: 1800.0,
        session_lifetime: Some(40.0),
        heartbeat_interval: 30.0,
        transaction_rate: 12.0,
        transaction_duration: (120.0, 600.0),
        charging_profile_rate: 30.0,
        seed: 3,
        ..SimConfig::default()
    };
    cfg.attacks = vec![
        AttackConfig { start: 60.0, end: 480.0, kind: AttackKind::ProfileManipulation { injected_limit: 80.0 } },
        AttackConfig { start: 480.0, end: 900.0, kind: AttackKind::DenialOfCharge },
        AttackConfig { start: 900.0, end: 1200.0, kind: AttackKind::HeartbeatFlood { bot_count: 5, heartbeat_period: 1.0 } },
        AttackConfig { start: 1200.0, end: 1500.0, kind: AttackKind::UnauthorizedAccess { bot_count: 5, retry_period: 20.0 } },
    ];
    let trace = simulate(&cfg).unwrap();
    let v = labelled(&trace);
    let class = |f: &FeatureVector| f.label.parse::<TrafficClass>().unwrap();
    let mut counts: BTreeMap<TrafficClass, usize> = BTreeMap::new();
    for f in &v {
        *counts.entry(class(f)).or_default() += 1;
        let predicted = if feature(f, "flow_max_ocpp16_setchargingprofile_limit") > 32.0 {
            TrafficClass::ProfileManipulation
        } else if feature(f, "flow_total_ocpp16_authorize_not_accepted_packets") >= 1.0 {
            TrafficClass::DenialOfCharge
        } else if feature(f, "flow_total_ocpp16_heartbeat_packets") >= 20.0 {
            TrafficClass::HeartbeatFlood
        } else if feature(f, "flow_total_http_4xx_packets") >= 1.0 {
            TrafficClass::UnauthorizedAccess
        } else {
            TrafficClass::Normal
        };
        assert_eq!(predicted, class(f), "flow {}", f.flow_id);
    }
    assert!(counts[&TrafficClass::Normal] >= 400, "{counts:?}");
    assert!(counts.iter().filter(|(c, _)| c.is_attack()).map(|(_, n)| n).sum::<usize>() >= 40);
    for c in TrafficClass::ALL {
        assert!(counts.get(&c).copied().unwrap_or(0) > 0, "{c} missing: {counts:?}");
    }
}
