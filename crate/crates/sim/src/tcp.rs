//! Synthetic TCP connections with consistent sequence/acknowledgement
//! numbers, delayed ACKs and FIN teardown.
//!
//! Times are seconds relative to the start of the run. Each connection
//! keeps its own clock: operations are applied in the order they are
//! called, and a call with an earlier time than the last emitted packet is
//! clamped forward.

use std::collections::VecDeque;

use flowguard_core::flow::Endpoint;
use flowguard_core::{DecodedPacket, TcpFlags, Timestamp};

pub const MSS: usize = 1448;
/// Receivers acknowledge data this long after arrival unless they send
/// something first.
pub const DELAYED_ACK: f64 = 0.040;
const WINDOW: u16 = 502;
const SYN_WINDOW: u16 = 64_240;
/// Spacing between back-to-back segments of one write.
const SEGMENT_GAP: f64 = 0.000_012;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

impl Side {
    fn idx(self) -> usize {
        match self {
            Side::Client => 0,
            Side::Server => 1,
        }
    }

    pub fn peer(self) -> Side {
        match self {
            Side::Client => Side::Server,
            Side::Server => Side::Client,
        }
    }
}

#[derive(Debug, Clone)]
struct SideState {
    endpoint: Endpoint,
    next_seq: u32,
    /// Next peer byte expected: the acknowledgement number.
    rcv_nxt: u32,
    /// Sent but not yet delivered segments: `(arrival, end_seq)`.
    in_flight: VecDeque<(f64, u32)>,
    ack_due: Option<f64>,
}

/// One client/server connection. Emitted packets are appended to `packets`
/// in emission order, which is also timestamp order.
#[derive(Debug, Clone)]
pub struct TcpConn {
    sides: [SideState; 2],
    latency: f64,
    base: Timestamp,
    /// Packets at or after this relative time are not captured.
    end: f64,
    now: f64,
    pub packets: Vec<DecodedPacket>,
    pub first_ts: Option<f64>,
    pub last_ts: Option<f64>,
}

impl TcpConn {
    pub fn new(
        client: Endpoint,
        server: Endpoint,
        isn: (u32, u32),
        latency: f64,
        base: Timestamp,
        end: f64,
    ) -> Self {
        let side = |endpoint, isn| SideState {
            endpoint,
            next_seq: isn,
            rcv_nxt: 0,
            in_flight: VecDeque::new(),
            ack_due: None,
        };
        TcpConn {
            sides: [side(client, isn.0), side(server, isn.1)],
            latency,
            base,
            end,
            now: 0.0,
            packets: Vec::new(),
            first_ts: None,
            last_ts: None,
        }
    }

    /// Time of the latest packet emitted or scheduled on this connection.
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn latency(&self) -> f64 {
        self.latency
    }

    pub fn client(&self) -> Endpoint {
        self.sides[0].endpoint
    }

    pub fn server(&self) -> Endpoint {
        self.sides[1].endpoint
    }

    fn emit(&mut self, t: f64, from: Side, flags: TcpFlags, seq: u32, ack: u32, payload: &[u8]) {
        self.now = self.now.max(t);
        if t >= self.end {
            return;
        }
        let src = self.sides[from.idx()].endpoint;
        let dst = self.sides[from.peer().idx()].endpoint;
        let window = if flags.contains(TcpFlags::SYN) { SYN_WINDOW } else { WINDOW };
        self.packets.push(DecodedPacket {
            timestamp: self.base.add_micros((t * 1e6).round() as i64),
            src_ip: src.ip,
            dst_ip: dst.ip,
            src_port: src.port,
            dst_port: dst.port,
            flags,
            seq,
            ack: if flags.contains(TcpFlags::ACK) { ack } else { 0 },
            window,
            payload: payload.to_vec(),
        });
        self.first_ts.get_or_insert(t);
        self.last_ts = Some(t);
    }

    /// Processes deliveries and delayed ACKs up to and including `t`.
    fn advance(&mut self, t: f64) {
        loop {
            // Earliest pending event: a delivery or an ACK deadline.
            let mut next: Option<(f64, usize, bool)> = None;
            for i in 0..2 {
                if let Some(&(arrival, _)) = self.sides[1 - i].in_flight.front() {
                    if arrival <= t && next.is_none_or(|(n, _, _)| arrival < n) {
                        next = Some((arrival, i, true));
                    }
                }
                if let Some(due) = self.sides[i].ack_due {
                    if due <= t && next.is_none_or(|(n, _, _)| due < n) {
                        next = Some((due, i, false));
                    }
                }
            }
            let Some((at, i, delivery)) = next else { break };
            if delivery {
                let (_, end_seq) = self.sides[1 - i].in_flight.pop_front().expect("front exists");
                self.sides[i].rcv_nxt = end_seq;
                if self.sides[i].ack_due.is_none() {
                    self.sides[i].ack_due = Some(at + DELAYED_ACK);
                }
            } else {
                self.sides[i].ack_due = None;
                let side = if i == 0 { Side::Client } else { Side::Server };
                let (seq, ack) = (self.sides[i].next_seq, self.sides[i].rcv_nxt);
                self.emit(at.max(self.now), side, TcpFlags::ACK, seq, ack, &[]);
            }
        }
    }

    /// Three-way handshake starting at `t`; returns when the client has
    /// sent its ACK and may send data.
    pub fn open(&mut self, t: f64, server_delay: f64) -> f64 {
        let (c, s) = (self.sides[0].next_seq, self.sides[1].next_seq);
        self.emit(t, Side::Client, TcpFlags::SYN, c, 0, &[]);
        let t_synack = t + self.latency + server_delay;
        self.emit(t_synack, Side::Server, TcpFlags::SYN | TcpFlags::ACK, s, c.wrapping_add(1), &[]);
        let t_ack = t_synack + self.latency;
        self.emit(t_ack, Side::Client, TcpFlags::ACK, c.wrapping_add(1), s.wrapping_add(1), &[]);
        self.sides[0].next_seq = c.wrapping_add(1);
        self.sides[1].next_seq = s.wrapping_add(1);
        self.sides[0].rcv_nxt = s.wrapping_add(1);
        self.sides[1].rcv_nxt = c.wrapping_add(1);
        t_ack
    }

    /// Sends `data` from `from` at `t` (or later if the connection clock is
    /// ahead); returns the arrival time of the last byte at the peer.
    pub fn send(&mut self, t: f64, from: Side, data: &[u8]) -> f64 {
        let t = t.max(self.now);
        self.advance(t);
        let i = from.idx();
        let mut at = t;
        let mut arrival = t + self.latency;
        for (k, chunk) in data.chunks(MSS).enumerate() {
            at = t + k as f64 * SEGMENT_GAP;
            let (seq, ack) = (self.sides[i].next_seq, self.sides[i].rcv_nxt);
            self.emit(at, from, TcpFlags::PSH | TcpFlags::ACK, seq, ack, chunk);
            let end_seq = seq.wrapping_add(chunk.len() as u32);
            self.sides[i].next_seq = end_seq;
            arrival = at + self.latency;
            self.sides[i].in_flight.push_back((arrival, end_seq));
        }
        self.sides[i].ack_due = None;
        self.now = self.now.max(at);
        arrival
    }

    /// FIN exchange: `closer` sends FIN at `t`, the peer answers with its
    /// own FIN after `peer_delay`, and the closer sends the final ACK.
    /// Returns the time of the final ACK.
    pub fn close(&mut self, t: f64, closer: Side, peer_delay: f64) -> f64 {
        let t = t.max(self.now);
        self.advance(t);
        let (ci, pi) = (closer.idx(), closer.peer().idx());
        let fin_seq = self.sides[ci].next_seq;
        let ack = self.sides[ci].rcv_nxt;
        self.emit(t, closer, TcpFlags::FIN | TcpFlags::ACK, fin_seq, ack, &[]);
        self.sides[ci].next_seq = fin_seq.wrapping_add(1);
        self.sides[ci].ack_due = None;
        self.sides[ci].in_flight.push_back((t + self.latency, fin_seq.wrapping_add(1)));

        let t_peer = t + self.latency + peer_delay;
        self.advance(t_peer);
        // The peer's FIN acknowledges everything including the closer's FIN.
        self.sides[pi].rcv_nxt = fin_seq.wrapping_add(1);
        let peer_seq = self.sides[pi].next_seq;
        self.emit(t_peer, closer.peer(), TcpFlags::FIN | TcpFlags::ACK, peer_seq, fin_seq.wrapping_add(1), &[]);
        self.sides[pi].next_seq = peer_seq.wrapping_add(1);
        self.sides[pi].ack_due = None;

        let t_last = t_peer + self.latency;
        self.emit(
            t_last,
            closer,
            TcpFlags::ACK,
            fin_seq.wrapping_add(1),
            peer_seq.wrapping_add(1),
            &[],
        );
        for s in &mut self.sides {
            s.in_flight.clear();
            s.ack_due = None;
        }
        t_last
    }

    /// Emits any ACKs still owed at the end of the connection's life.
    pub fn flush(&mut self) {
        self.advance(f64::INFINITY);
    }
}
