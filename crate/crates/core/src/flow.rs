//! Bidirectional flow assembly with an active timeout and TCP teardown.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::http::{parse_http, HttpEvent};
use crate::ocpp::{parse_ocpp, OcppParse};
use crate::packet::{DecodedPacket, TcpFlags, IPPROTO_TCP};
use crate::reassembly::{reassemble_direction, Direction, DirectionalStream};
use crate::time::Timestamp;
use crate::websocket::{parse_websocket, WsFrame};

/// Flows are cut when a packet arrives more than this long after the flow's
/// first packet.
pub const FLOW_TIMEOUT_MICROS: i64 = 120 * crate::time::MICROS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        Endpoint { ip, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Direction-independent connection key: endpoints in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub endpoint_a: Endpoint,
    pub endpoint_b: Endpoint,
    pub protocol: u8,
}

impl FlowKey {
    pub fn new(x: Endpoint, y: Endpoint) -> Self {
        let (endpoint_a, endpoint_b) = if x <= y { (x, y) } else { (y, x) };
        FlowKey { endpoint_a, endpoint_b, protocol: IPPROTO_TCP }
    }

    pub fn of(p: &DecodedPacket) -> Self {
        FlowKey::new(Endpoint::new(p.src_ip, p.src_port), Endpoint::new(p.dst_ip, p.dst_port))
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-TCP", self.endpoint_a, self.endpoint_b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowPacket {
    pub direction: Direction,
    pub packet: DecodedPacket,
}

/// One bidirectional flow. Forward is the direction of the connection
/// initiator (the first packet's sender, or the SYN sender).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub key: FlowKey,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub packets: Vec<FlowPacket>,
    /// Set when this flow was cut from a longer connection by the active
    /// timeout, so the opening handshake lies in an earlier flow.
    pub continuation: bool,
}

impl Flow {
    fn open(first: &DecodedPacket) -> Self {
        let sender = Endpoint::new(first.src_ip, first.src_port);
        let receiver = Endpoint::new(first.dst_ip, first.dst_port);
        // A captured SYN-ACK without its SYN still identifies the initiator.
        let (src, dst) = if first.flags.contains(TcpFlags::SYN) && first.flags.contains(TcpFlags::ACK) {
            (receiver, sender)
        } else {
            (sender, receiver)
        };
        Flow {
            key: FlowKey::new(src, dst),
            src,
            dst,
            start_ts: first.timestamp,
            end_ts: first.timestamp,
            packets: Vec::new(),
            continuation: false,
        }
    }

    /// Opens the next flow of a connection split by the timeout, keeping
    /// the initiator orientation of its predecessor.
    fn resume(prev: &Flow, first: &DecodedPacket) -> Self {
        Flow {
            key: prev.key,
            src: prev.src,
            dst: prev.dst,
            start_ts: first.timestamp,
            end_ts: first.timestamp,
            packets: Vec::new(),
            continuation: true,
        }
    }

    pub fn direction_of(&self, p: &DecodedPacket) -> Direction {
        if p.src_ip == self.src.ip && p.src_port == self.src.port {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }

    fn push(&mut self, packet: DecodedPacket) {
        let direction = self.direction_of(&packet);
        self.end_ts = self.end_ts.max(packet.timestamp);
        self.packets.push(FlowPacket { direction, packet });
    }

    /// `ip_a:port_a-ip_b:port_b-TCP-start` with canonical endpoint order.
    pub fn flow_id(&self) -> String {
        format!("{}-{}", self.key, self.start_ts)
    }

    pub fn duration_secs(&self) -> f64 {
        self.end_ts.secs_since(self.start_ts)
    }

    pub fn stream(&self, direction: Direction) -> DirectionalStream {
        reassemble_direction(
            self.packets
                .iter()
                .enumerate()
                .filter(|(_, fp)| fp.direction == direction)
                .map(|(i, fp)| (i, &fp.packet)),
            direction,
        )
    }

    /// Reassembles both directions and decodes HTTP, WebSocket and OCPP.
    pub fn parse(&self) -> AppLayer {
        let fw_stream = self.stream(Direction::Forward);
        let bw_stream = self.stream(Direction::Backward);
        let fw_http = parse_http(&fw_stream);
        let bw_http = parse_http(&bw_stream);

        let mut http = fw_http.events.clone();
        http.extend(bw_http.events.iter().cloned());
        http.sort_by_key(|e| (e.timestamp, e.direction));

        let accepted = http.iter().any(HttpEvent::is_switching_protocols);
        let mut frames = Vec::new();
        let mut ws_truncated = false;
        if accepted {
            for (stream, parse) in [(&fw_stream, &fw_http), (&bw_stream, &bw_http)] {
                if let Some(offset) = parse.upgrade_offset {
                    let ws = parse_websocket(stream, offset);
                    ws_truncated |= ws.truncated || ws.malformed;
                    frames.extend(ws.frames);
                }
            }
        } else if self.continuation && http.is_empty() {
            // Mid-connection flow: the upgrade happened in an earlier flow,
            // so try framing from the first captured byte.
            for stream in [&fw_stream, &bw_stream] {
                let ws = parse_websocket(stream, 0);
                ws_truncated |= ws.truncated || ws.malformed;
                frames.extend(ws.frames);
            }
        }
        frames.sort_by_key(|f: &WsFrame| (f.timestamp, f.direction));
        let ocpp = parse_ocpp(&frames);
        AppLayer { fw_stream, bw_stream, http, websocket_accepted: accepted, frames, ws_truncated, ocpp }
    }
}

/// Decoded application data of one flow.
#[derive(Debug, Clone)]
pub struct AppLayer {
    pub fw_stream: DirectionalStream,
    pub bw_stream: DirectionalStream,
    pub http: Vec<HttpEvent>,
    pub websocket_accepted: bool,
    pub frames: Vec<WsFrame>,
    pub ws_truncated: bool,
    pub ocpp: OcppParse,
}

struct OpenFlow {
    flow: Flow,
    fin_fw: bool,
    fin_bw: bool,
}

/// Incremental flow table. Packets must be pushed in timestamp order.
#[derive(Default)]
pub struct FlowAssembler {
    open: BTreeMap<FlowKey, OpenFlow>,
    done: Vec<Flow>,
}

impl FlowAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, packet: DecodedPacket) {
        let key = FlowKey::of(&packet);
        let ts = packet.timestamp;
        if let Some(open) = self.open.get(&key) {
            let expired = ts.micros_since(open.flow.start_ts) > FLOW_TIMEOUT_MICROS;
            let reopened = open.fin_fw
                && open.fin_bw
                && packet.flags.contains(TcpFlags::SYN)
                && !packet.flags.contains(TcpFlags::ACK);
            if reopened {
                let old = self.open.remove(&key).expect("present");
                self.done.push(old.flow);
            } else if expired {
                let old = self.open.remove(&key).expect("present");
                let next = OpenFlow {
                    flow: Flow::resume(&old.flow, &packet),
                    fin_fw: old.fin_fw,
                    fin_bw: old.fin_bw,
                };
                self.done.push(old.flow);
                self.open.insert(key, next);
            }
        }
        let entry = self.open.entry(key).or_insert_with(|| OpenFlow {
            flow: Flow::open(&packet),
            fin_fw: false,
            fin_bw: false,
        });
        let both_fin_before = entry.fin_fw && entry.fin_bw;
        let direction = entry.flow.direction_of(&packet);
        let flags = packet.flags;
        entry.flow.push(packet);

        let close = if flags.contains(TcpFlags::RST) {
            true
        } else if both_fin_before {
            flags.contains(TcpFlags::ACK) && !flags.contains(TcpFlags::FIN)
        } else {
            if flags.contains(TcpFlags::FIN) {
                match direction {
                    Direction::Forward => entry.fin_fw = true,
                    Direction::Backward => entry.fin_bw = true,
                }
            }
            false
        };
        if close {
            let f = self.open.remove(&key).expect("present");
            self.done.push(f.flow);
        }
    }

    /// Flushes every open flow; returns all flows ordered by start time and
    /// key.
    pub fn finish(mut self) -> Vec<Flow> {
        let open = std::mem::take(&mut self.open);
        self.done.extend(open.into_values().map(|o| o.flow));
        self.done.sort_by_key(|a| (a.start_ts, a.key));
        self.done
    }
}

/// Groups packets into flows. Input order does not matter; packets are
/// processed in timestamp order (stable for equal timestamps).
pub fn assemble_flows(mut packets: Vec<DecodedPacket>) -> Vec<Flow> {
    packets.sort_by_key(|p| p.timestamp);
    let mut asm = FlowAssembler::new();
    for p in packets {
        asm.push(p);
    }
    asm.finish()
}
