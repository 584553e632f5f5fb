//! Brute-force recomputation of every feature column straight from a packet
//! list. Written without the extractor's types beyond the packet struct so
//! the two can be compared column by column.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde_json::Value;

use flowguard_core::{DecodedPacket, TcpFlags};

const TIMEOUT_US: i64 = 120_000_000;

type Ep = (Ipv4Addr, u16);

#[derive(Debug, Clone)]
pub struct OracleFlow {
    pub src: Ep,
    pub dst: Ep,
    pub continuation: bool,
    /// `(is_forward, packet)` in capture order.
    pub packets: Vec<(bool, DecodedPacket)>,
    fin_fw: bool,
    fin_bw: bool,
    closed: bool,
}

impl OracleFlow {
    fn start_us(&self) -> i64 {
        self.packets[0].1.timestamp.micros_since(Default::default())
    }
    fn end_us(&self) -> i64 {
        self.packets.iter().map(|(_, p)| p.timestamp.micros_since(Default::default())).max().unwrap()
    }
}

fn pair(p: &DecodedPacket) -> (Ep, Ep) {
    let a = (p.src_ip, p.src_port);
    let b = (p.dst_ip, p.dst_port);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Groups packets into flows: 120 s active timeout measured from the first
/// packet, close on RST or on the ACK after both FINs, and a pure SYN after
/// both FINs starts a fresh connection.
pub fn flows(packets: &[DecodedPacket]) -> Vec<OracleFlow> {
    let mut sorted: Vec<&DecodedPacket> = packets.iter().collect();
    sorted.sort_by_key(|p| p.timestamp);
    let mut all: Vec<OracleFlow> = Vec::new();
    for p in sorted {
        let t = p.timestamp.micros_since(Default::default());
        let key = pair(p);
        let open = all.iter().rposition(|f| !f.closed && (f.src.min(f.dst), f.src.max(f.dst)) == key);
        let mut target = None;
        if let Some(i) = open {
            let f = &all[i];
            let syn_only = p.flags.contains(TcpFlags::SYN) && !p.flags.contains(TcpFlags::ACK);
            if f.fin_fw && f.fin_bw && syn_only {
                all[i].closed = true;
            } else if t - f.start_us() > TIMEOUT_US {
                let next = OracleFlow {
                    src: f.src,
                    dst: f.dst,
                    continuation: true,
                    packets: Vec::new(),
                    fin_fw: f.fin_fw,
                    fin_bw: f.fin_bw,
                    closed: false,
                };
                all[i].closed = true;
                all.push(next);
                target = Some(all.len() - 1);
            } else {
                target = Some(i);
            }
        }
        let i = match target {
            Some(i) => i,
            None => {
                let from = (p.src_ip, p.src_port);
                let to = (p.dst_ip, p.dst_port);
                let synack = p.flags.contains(TcpFlags::SYN) && p.flags.contains(TcpFlags::ACK);
                let (src, dst) = if synack { (to, from) } else { (from, to) };
                all.push(OracleFlow {
                    src,
                    dst,
                    continuation: false,
                    packets: Vec::new(),
                    fin_fw: false,
                    fin_bw: false,
                    closed: false,
                });
                all.len() - 1
            }
        };
        let f = &mut all[i];
        let fwd = (p.src_ip, p.src_port) == f.src;
        let both_before = f.fin_fw && f.fin_bw;
        f.packets.push((fwd, p.clone()));
        if p.flags.contains(TcpFlags::RST) {
            f.closed = true;
        } else if both_before {
            if p.flags.contains(TcpFlags::ACK) && !p.flags.contains(TcpFlags::FIN) {
                f.closed = true;
            }
        } else if p.flags.contains(TcpFlags::FIN) {
            if fwd {
                f.fin_fw = true;
            } else {
                f.fin_bw = true;
            }
        }
    }
    all
}

/// One direction's bytes with the capture time of each segment start.
struct Stream {
    bytes: Vec<u8>,
    marks: Vec<(usize, i64)>,
}

impl Stream {
    /// The simulator never reorders or retransmits, so capture order is
    /// stream order.
    fn of(flow: &OracleFlow, fwd: bool) -> Stream {
        let mut s = Stream { bytes: Vec::new(), marks: Vec::new() };
        for (d, p) in &flow.packets {
            if *d == fwd && !p.payload.is_empty() {
                s.marks.push((s.bytes.len(), p.timestamp.micros_since(Default::default())));
                s.bytes.extend_from_slice(&p.payload);
            }
        }
        s
    }

    fn time_at(&self, offset: usize) -> i64 {
        self.marks.iter().rev().find(|(o, _)| *o <= offset).map(|(_, t)| *t).unwrap_or(0)
    }
}

struct Http {
    get: bool,
    status: Option<u16>,
    upgrade_ws: bool,
}

/// HTTP heads up to and including the upgrade; returns them and the offset
/// where WebSocket framing starts.
fn http(s: &Stream) -> (Vec<Http>, Option<usize>) {
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &s.bytes[pos..];
        let Some(end) = rest.windows(4).position(|w| w == b"\r\n\r\n") else { break };
        let Ok(head) = std::str::from_utf8(&rest[..end]) else { break };
        let mut lines = head.split("\r\n");
        let first = lines.next().unwrap_or("");
        let words: Vec<&str> = first.split(' ').collect();
        let (get, status) = if first.starts_with("HTTP/") {
            match words.get(1).and_then(|c| if c.len() == 3 { c.parse().ok() } else { None }) {
                Some(c) => (false, Some(c)),
                None => break,
            }
        } else if words.len() == 3
            && words[2].starts_with("HTTP/")
            && ["GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "CONNECT", "TRACE"].contains(&words[0])
        {
            (words[0] == "GET", None)
        } else {
            break;
        };
        let mut upgrade_ws = false;
        let mut body = 0;
        for l in lines {
            if let Some((k, v)) = l.split_once(':') {
                match k.trim().to_ascii_lowercase().as_str() {
                    "upgrade" => upgrade_ws = v.trim().eq_ignore_ascii_case("websocket"),
                    "content-length" => body = v.trim().parse().unwrap_or(0),
                    _ => {}
                }
            }
        }
        pos = (pos + end + 4 + body).min(s.bytes.len());
        let switches = upgrade_ws && (status.is_none() || status == Some(101));
        out.push(Http { get, status, upgrade_ws });
        if switches {
            return (out, Some(pos));
        }
        if pos >= s.bytes.len() {
            break;
        }
    }
    (out, None)
}

struct Frame {
    fwd: bool,
    t: i64,
    fin: bool,
    opcode: u8,
    payload: Vec<u8>,
}

fn frames(s: &Stream, from: usize, fwd: bool) -> Vec<Frame> {
    let b = &s.bytes;
    let mut out = Vec::new();
    let mut pos = from;
    while pos + 2 <= b.len() {
        let (b0, b1) = (b[pos], b[pos + 1]);
        let opcode = b0 & 0x0f;
        let fin = b0 & 0x80 != 0;
        if b0 & 0x70 != 0 || ![0, 1, 2, 8, 9, 10].contains(&opcode) {
            break;
        }
        let mut at = pos + 2;
        let mut len = (b1 & 0x7f) as u64;
        if len == 126 {
            if at + 2 > b.len() {
                break;
            }
            len = u16::from_be_bytes([b[at], b[at + 1]]) as u64;
            at += 2;
        } else if len == 127 {
            if at + 8 > b.len() {
                break;
            }
            len = u64::from_be_bytes(b[at..at + 8].try_into().unwrap());
            at += 8;
        }
        if opcode >= 8 && (len > 125 || !fin) {
            break;
        }
        let mask = if b1 & 0x80 != 0 {
            if at + 4 > b.len() {
                break;
            }
            at += 4;
            Some([b[at - 4], b[at - 3], b[at - 2], b[at - 1]])
        } else {
            None
        };
        let len = len as usize;
        if at + len > b.len() {
            break;
        }
        let payload: Vec<u8> =
            b[at..at + len].iter().enumerate().map(|(i, x)| mask.map_or(*x, |k| x ^ k[i % 4])).collect();
        out.push(Frame { fwd, t: s.time_at(pos), fin, opcode, payload });
        pos = at + len;
    }
    out
}

fn num(v: &Value) -> Option<f64> {
    v.as_f64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
}

fn items(v: &Value) -> Vec<&Value> {
    match v {
        Value::Array(a) => a.iter().collect(),
        Value::Null => vec![],
        o => vec![o],
    }
}

fn stats(v: &[f64]) -> (f64, f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut max = v[0];
    let mut min = v[0];
    let mut sum = 0.0;
    for x in v {
        max = max.max(*x);
        min = min.min(*x);
        sum += x;
    }
    (sum / v.len() as f64, max, min)
}

/// Every numeric column of `flow`, keyed by column name, plus the identity
/// columns rendered as strings.
pub fn features(flow: &OracleFlow) -> (BTreeMap<&'static str, f64>, BTreeMap<&'static str, String>) {
    let mut f: BTreeMap<&'static str, f64> = BTreeMap::new();
    let (start, end) = (flow.start_us(), flow.end_us());
    let dur = (end - start) as f64 / 1e6;
    let n = flow.packets.len() as f64;
    let fw = flow.packets.iter().filter(|(d, _)| *d).count() as f64;
    f.insert("total_flow_packets", n);
    f.insert("total_fw_packets", fw);
    f.insert("total_bw_packets", n - fw);
    f.insert("flow_duration", dur);
    f.insert("flow_down_up_ratio", if fw > 0.0 { (n - fw) / fw } else { 0.0 });
    let bits = |mask: u8| flow.packets.iter().filter(|(_, p)| p.flags.bits() & mask != 0).count() as f64;
    f.insert("flow_total_FIN_flag", bits(0x01));
    f.insert("flow_total_SYN_flag", bits(0x02));
    f.insert("flow_total_RST_flag", bits(0x04));
    f.insert("flow_total_PSH_flag", bits(0x08));
    f.insert("flow_total_ACK_flag", bits(0x10));
    f.insert("flow_total_URG_flag", bits(0x20));
    f.insert("flow_total_ECE_flag", bits(0x40));
    f.insert("flow_total_CWE_flag", bits(0x80));

    let sf = Stream::of(flow, true);
    let sb = Stream::of(flow, false);
    let (hf, of) = http(&sf);
    let (hb, ob) = http(&sb);
    let heads: Vec<&Http> = hf.iter().chain(&hb).collect();
    let count = |p: &dyn Fn(&Http) -> bool| heads.iter().filter(|h| p(h)).count() as f64;
    f.insert("flow_total_http_get_packets", count(&|h| h.get));
    f.insert("flow_total_http_2xx_packets", count(&|h| h.status.is_some_and(|c| (200..300).contains(&c))));
    f.insert("flow_total_http_4xx_packets", count(&|h| h.status.is_some_and(|c| (400..500).contains(&c))));
    f.insert("flow_total_http_5xx_packets", count(&|h| h.status.is_some_and(|c| (500..600).contains(&c))));

    let accepted = heads.iter().any(|h| h.status == Some(101) && h.upgrade_ws);
    let mut fr: Vec<Frame> = Vec::new();
    if accepted {
        if let Some(o) = of {
            fr.extend(frames(&sf, o, true));
        }
        if let Some(o) = ob {
            fr.extend(frames(&sb, o, false));
        }
    } else if flow.continuation && heads.is_empty() {
        fr.extend(frames(&sf, 0, true));
        fr.extend(frames(&sb, 0, false));
    }
    let rate = |x: f64| if dur > 0.0 { x / dur } else { 0.0 };
    for (name_p, name_b, sel) in [
        ("flow_websocket_packts_per_second", "flow_websocket_bytes_per_second", None),
        ("fw_websocket_packts_per_second", "fw_websocket_bytes_per_second", Some(true)),
        ("bw_websocket_packts_per_second", "bw_websocket_bytes_per_second", Some(false)),
    ] {
        let chosen: Vec<&Frame> = fr.iter().filter(|x| sel.is_none_or(|d| x.fwd == d)).collect();
        f.insert(name_p, rate(chosen.len() as f64));
        f.insert(name_b, rate(chosen.iter().map(|x| x.payload.len()).sum::<usize>() as f64));
    }
    let ops = |o: &[u8]| fr.iter().filter(|x| o.contains(&x.opcode)).count() as f64;
    f.insert("flow_total_websocket_ping_packets", ops(&[9]));
    f.insert("flow_total_websocket_pong_packets", ops(&[10]));
    f.insert("flow_total_websocket_close_packets", ops(&[8]));
    f.insert("flow_total_websocket_data_messages", ops(&[1, 2]));

    // Data messages per direction, then both directions merged by time.
    let mut msgs: Vec<(i64, bool, Option<Vec<u8>>)> = Vec::new();
    for dir in [true, false] {
        let mut open: Option<(i64, Vec<u8>)> = None;
        for x in fr.iter().filter(|x| x.fwd == dir && x.opcode < 8) {
            if x.opcode == 0 {
                if let Some((t, mut p)) = open.take() {
                    p.extend_from_slice(&x.payload);
                    if x.fin {
                        msgs.push((t, dir, Some(p)));
                    } else {
                        open = Some((t, p));
                    }
                }
                continue;
            }
            if let Some((t, _)) = open.take() {
                msgs.push((t, dir, None));
            }
            if x.fin {
                msgs.push((x.t, dir, Some(x.payload.clone())));
            } else {
                open = Some((x.t, x.payload.clone()));
            }
        }
        if let Some((t, _)) = open {
            msgs.push((t, dir, None));
        }
    }
    msgs.sort_by_key(|(t, d, _)| (*t, !*d));

    let mut pending: BTreeMap<String, String> = BTreeMap::new();
    let mut calls: Vec<(String, Value)> = Vec::new();
    let mut rejected = 0.0;
    for (_, _, body) in msgs {
        let Some(v) = body.and_then(|b| serde_json::from_slice::<Value>(&b).ok()) else { continue };
        let Some(a) = v.as_array() else { continue };
        let (Some(kind), Some(id)) = (a.first().and_then(Value::as_u64), a.get(1).and_then(Value::as_str)) else {
            continue;
        };
        match (kind, a.len()) {
            (2, 4) => {
                let Some(action) = a[2].as_str() else { continue };
                pending.insert(id.to_string(), action.to_string());
                calls.push((action.to_string(), a[3].clone()));
            }
            (3, 3) => {
                if pending.remove(id).as_deref() == Some("Authorize")
                    && a[2]["idTagInfo"]["status"].as_str().is_some_and(|s| s != "Accepted") {
                        rejected += 1.0;
                    }
            }
            (4, 4 | 5) if a[2].is_string() => {
                pending.remove(id);
            }
            _ => {}
        }
    }
    let of_action = |name: &str| calls.iter().filter(|(a, _)| a == name).map(|(_, p)| p).collect::<Vec<_>>();
    f.insert("flow_total_ocpp16_heartbeat_packets", of_action("Heartbeat").len() as f64);
    let resets = of_action("Reset");
    f.insert("flow_total_ocpp16_resetHard_packets", resets.iter().filter(|p| p["type"] == "Hard").count() as f64);
    f.insert("flow_total_ocpp16_resetSoft_packets", resets.iter().filter(|p| p["type"] == "Soft").count() as f64);
    f.insert("flow_total_ocpp16_unlockconnector_packets", of_action("UnlockConnector").len() as f64);
    f.insert("flow_total_ocpp16_starttransaction_packets", of_action("StartTransaction").len() as f64);
    f.insert("flow_total_ocpp16_remotestarttransaction_packets", of_action("RemoteStartTransaction").len() as f64);
    f.insert("flow_total_ocpp16_authorize_not_accepted_packets", rejected);

    let profiles = of_action("SetChargingProfile");
    f.insert("flow_total_ocpp16_setchargingprofile_packets", profiles.len() as f64);
    let mut limits = Vec::new();
    let mut min_rates = Vec::new();
    for p in &profiles {
        let sched = &p["csChargingProfiles"]["chargingSchedule"];
        limits.extend(items(&sched["chargingSchedulePeriod"]).into_iter().filter_map(|x| num(&x["limit"])));
        min_rates.extend(num(&sched["minChargingRate"]));
    }
    let (a, mx, mn) = stats(&limits);
    f.insert("flow_avg_ocpp16_setchargingprofile_limit", a);
    f.insert("flow_max_ocpp16_setchargingprofile_limit", mx);
    f.insert("flow_min_ocpp16_setchargingprofile_limit", mn);
    let (a, mx, mn) = stats(&min_rates);
    f.insert("flow_avg_ocpp16_setchargingprofile_minchargingrate", a);
    f.insert("flow_max_ocpp16_setchargingprofile_minchargingrate", mx);
    f.insert("flow_min_ocpp16_setchargingprofile_minchargingrate", mn);

    let meters = of_action("MeterValues");
    f.insert("flow_total_ocpp16_metervalues", meters.len() as f64);
    let mut soc = Vec::new();
    let mut last: BTreeMap<i64, f64> = BTreeMap::new();
    let mut diffs = Vec::new();
    for m in &meters {
        let mut energy = None;
        for mv in items(&m["meterValue"]) {
            for sv in items(&mv["sampledValue"]) {
                let Some(mut x) = num(&sv["value"]) else { continue };
                match sv["measurand"].as_str().unwrap_or("Energy.Active.Import.Register") {
                    "SoC" => soc.push(x),
                    "Energy.Active.Import.Register" => {
                        if sv["unit"] == "kWh" {
                            x *= 1000.0;
                        }
                        energy = Some(x);
                    }
                    _ => {}
                }
            }
        }
        if let Some(e) = energy {
            if let Some(prev) = last.insert(m["connectorId"].as_i64().unwrap_or(0), e) {
                diffs.push(e - prev);
            }
        }
    }
    let (_, mx, mn) = stats(&soc);
    f.insert("flow_min_ocpp16_metervalues_soc", mn);
    f.insert("flow_max_ocpp16_metervalues_soc", mx);
    let (a, mx, mn) = stats(&diffs);
    f.insert("flow_avg_ocpp16_metervalues_wh_diff", a);
    f.insert("flow_max_ocpp16_metervalues_wh_diff", mx);
    f.insert("flow_min_ocpp16_metervalues_wh_diff", mn);

    let ts = |us: i64| format!("{}.{:06}", us.div_euclid(1_000_000), us.rem_euclid(1_000_000));
    let (lo, hi) = (flow.src.min(flow.dst), flow.src.max(flow.dst));
    let mut ids = BTreeMap::new();
    ids.insert("flow_id", format!("{}:{}-{}:{}-TCP-{}", lo.0, lo.1, hi.0, hi.1, ts(start)));
    ids.insert("src_ip", flow.src.0.to_string());
    ids.insert("dst_ip", flow.dst.0.to_string());
    ids.insert("src_port", flow.src.1.to_string());
    ids.insert("dst_port", flow.dst.1.to_string());
    ids.insert("flow_start_timestamp", ts(start));
    ids.insert("flow_end_timestamp", ts(end));
    (f, ids)
}
