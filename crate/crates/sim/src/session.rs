//! An OCPP-J WebSocket session on top of a synthetic TCP connection.

use rand::Rng;
use serde_json::Value;

use flowguard_core::ocpp::Envelope;
use flowguard_core::websocket::{encode_frame, OPCODE_CLOSE, OPCODE_PING, OPCODE_PONG, OPCODE_TEXT};
use flowguard_core::Timestamp;

use crate::messages;
use crate::rng::{hex_string, SimRng};
use crate::tcp::{Side, TcpConn};

/// Timing of one request/response pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exchange {
    /// When the request left its sender.
    pub sent: f64,
    /// When the response reached the requester.
    pub done: f64,
}

pub struct Session {
    pub conn: TcpConn,
    rng: SimRng,
    base: Timestamp,
}

impl Session {
    pub fn new(conn: TcpConn, rng: SimRng, base: Timestamp) -> Self {
        Session { conn, rng, base }
    }

    pub fn timestamp(&self, t: f64) -> Timestamp {
        self.base.add_micros((t * 1e6).round() as i64)
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Processing time of a request at the given side.
    pub fn think(&mut self, side: Side) -> f64 {
        match side {
            Side::Client => self.rng.gen_range(0.002..0.015),
            Side::Server => self.rng.gen_range(0.001..0.005),
        }
    }

    pub fn unique_id(&mut self) -> String {
        let r = &mut self.rng;
        format!(
            "{}-{}-{}-{}-{}",
            hex_string(r, 8),
            hex_string(r, 4),
            hex_string(r, 4),
            hex_string(r, 4),
            hex_string(r, 12)
        )
        .to_ascii_lowercase()
    }

    /// Sends one WebSocket frame; client frames are masked.
    pub fn frame(&mut self, t: f64, from: Side, opcode: u8, payload: &[u8]) -> f64 {
        let mask = match from {
            Side::Client => Some(self.rng.gen::<[u8; 4]>()),
            Side::Server => None,
        };
        let bytes = encode_frame(true, opcode, payload, mask);
        self.conn.send(t, from, &bytes)
    }

    /// TCP handshake plus HTTP upgrade to `path`. Returns the time the
    /// client has the `101` response.
    pub fn upgrade(&mut self, t: f64, path: &str, host: &str) -> f64 {
        let d = self.think(Side::Server);
        let ready = self.conn.open(t, d);
        let key = messages::websocket_key(self.rng.gen());
        let arrival = self.conn.send(ready, Side::Client, messages::upgrade_request(path, host, &key).as_bytes());
        let d = self.think(Side::Server);
        self.conn.send(arrival + d, Side::Server, messages::switching_protocols(&key).as_bytes())
    }

    /// TCP handshake, rejected upgrade, and server-initiated teardown.
    /// Returns the time of the final packet.
    pub fn rejected_upgrade(&mut self, t: f64, path: &str, host: &str) -> f64 {
        let d = self.think(Side::Server);
        let ready = self.conn.open(t, d);
        let key = messages::websocket_key(self.rng.gen());
        let arrival = self.conn.send(ready, Side::Client, messages::upgrade_request(path, host, &key).as_bytes());
        let d = self.think(Side::Server);
        let sent = arrival + d;
        self.conn.send(sent, Side::Server, messages::not_found().as_bytes());
        let d = self.think(Side::Client);
        let end = self.conn.close(sent + 0.0005, Side::Server, d);
        self.conn.flush();
        end
    }

    /// Sends a CALL from `from` at `t`; the peer answers with the payload
    /// built by `respond` from its local clock.
    pub fn call(
        &mut self,
        t: f64,
        from: Side,
        action: &str,
        payload: Value,
        respond: impl FnOnce(Timestamp) -> Value,
    ) -> Exchange {
        let unique_id = self.unique_id();
        let req = Envelope::Call { unique_id: unique_id.clone(), action: action.to_string(), payload };
        let sent = t.max(self.clock());
        let arrival = self.frame(sent, from, OPCODE_TEXT, req.to_json().as_bytes());
        let at = arrival + self.think(from.peer());
        let res = Envelope::CallResult { unique_id, payload: respond(self.timestamp(at)) };
        let done = self.frame(at, from.peer(), OPCODE_TEXT, res.to_json().as_bytes());
        Exchange { sent, done }
    }

    /// Server ping and client pong.
    pub fn ping(&mut self, t: f64) -> f64 {
        let arrival = self.frame(t, Side::Server, OPCODE_PING, &[]);
        let d = self.think(Side::Client);
        self.frame(arrival + d, Side::Client, OPCODE_PONG, &[])
    }

    /// Client-initiated WebSocket close followed by the server closing the
    /// TCP connection. Returns the time of the final packet.
    pub fn close(&mut self, t: f64) -> f64 {
        let code = 1000u16.to_be_bytes();
        let arrival = self.frame(t, Side::Client, OPCODE_CLOSE, &code);
        let d = self.think(Side::Server);
        let sent = arrival + d;
        self.frame(sent, Side::Server, OPCODE_CLOSE, &code);
        let d = self.think(Side::Client);
        let end = self.conn.close(sent + 0.0005, Side::Server, d);
        self.conn.flush();
        end
    }

    /// Earliest time the next message can be sent on this session.
    pub fn clock(&self) -> f64 {
        self.conn.now()
    }
}
