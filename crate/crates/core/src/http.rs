//! Minimal HTTP/1.x message recognition for the WebSocket opening handshake.

use serde::{Deserialize, Serialize};

use crate::reassembly::{Direction, DirectionalStream};
use crate::time::Timestamp;

const MAX_HEAD_LEN: usize = 16 * 1024;
const METHODS: [&str; 9] = [
    "GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "CONNECT", "TRACE",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpKind {
    Request,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEvent {
    pub kind: HttpKind,
    pub method: Option<String>,
    pub target: Option<String>,
    pub status_code: Option<u16>,
    pub upgrade: Option<String>,
    pub connection: Option<String>,
    pub direction: Direction,
    pub timestamp: Option<Timestamp>,
    /// Stream offset just past this message (head and body).
    pub end_offset: usize,
}

impl HttpEvent {
    pub fn is_websocket_upgrade(&self) -> bool {
        self.upgrade
            .as_deref()
            .is_some_and(|u| u.eq_ignore_ascii_case("websocket"))
    }

    pub fn is_switching_protocols(&self) -> bool {
        self.status_code == Some(101) && self.is_websocket_upgrade()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HttpParse {
    pub events: Vec<HttpEvent>,
    /// Offset where WebSocket framing begins in this direction: after a
    /// `101` upgrade response, or after a request asking for the upgrade.
    pub upgrade_offset: Option<usize>,
}

fn find_head_end(bytes: &[u8]) -> Option<usize> {
    bytes.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn parse_start_line(line: &str) -> Option<(HttpKind, Option<String>, Option<String>, Option<u16>)> {
    if let Some(rest) = line.strip_prefix("HTTP/") {
        let mut parts = rest.splitn(3, ' ');
        let _version = parts.next()?;
        let code = parts.next()?;
        if code.len() != 3 {
            return None;
        }
        let code: u16 = code.parse().ok()?;
        return Some((HttpKind::Response, None, None, Some(code)));
    }
    let mut parts = line.split(' ');
    let method = parts.next()?;
    let target = parts.next()?;
    let version = parts.next()?;
    if parts.next().is_some() || !METHODS.contains(&method) || !version.starts_with("HTTP/") {
        return None;
    }
    Some((HttpKind::Request, Some(method.to_string()), Some(target.to_string()), None))
}

/// Recognises consecutive HTTP messages from the start of `stream`.
///
/// Parsing stops at the first bytes that are not an HTTP message head, at an
/// incomplete head, or once the stream switches to WebSocket framing.
pub fn parse_http(stream: &DirectionalStream) -> HttpParse {
    let bytes = &stream.bytes;
    let mut out = HttpParse::default();
    let mut pos = 0;
    while pos < bytes.len() {
        let window = &bytes[pos..bytes.len().min(pos + MAX_HEAD_LEN)];
        let Some(head_len) = find_head_end(window) else { break };
        let Ok(head) = std::str::from_utf8(&window[..head_len - 4]) else { break };
        let mut lines = head.split("\r\n");
        let Some((kind, method, target, status_code)) = lines.next().and_then(parse_start_line) else {
            break;
        };
        let mut upgrade = None;
        let mut connection = None;
        let mut content_length = 0usize;
        for line in lines {
            let Some((name, value)) = line.split_once(':') else { continue };
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "upgrade" => upgrade = Some(value.to_string()),
                "connection" => connection = Some(value.to_string()),
                "content-length" => content_length = value.parse().unwrap_or(0),
                _ => {}
            }
        }
        let body_end = (pos + head_len + content_length).min(bytes.len());
        let event = HttpEvent {
            kind,
            method,
            target,
            status_code,
            upgrade,
            connection,
            direction: stream.direction,
            timestamp: stream.timestamp_at(pos),
            end_offset: body_end,
        };
        let switches = match kind {
            HttpKind::Response => event.is_switching_protocols(),
            HttpKind::Request => event.is_websocket_upgrade(),
        };
        out.events.push(event);
        pos = body_end;
        if switches {
            out.upgrade_offset = Some(pos);
            break;
        }
    }
    out
}
