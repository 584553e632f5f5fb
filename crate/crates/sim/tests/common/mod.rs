//! Independent capture reader for checking simulator output: parses the
//! PCAP image byte by byte and pulls OCPP-J arrays out of WebSocket frames
//! without going through the extractor.

#![allow(dead_code)]

use std::collections::BTreeMap;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct Segment {
    pub ts: f64,
    pub src: ([u8; 4], u16),
    pub dst: ([u8; 4], u16),
    pub flags: u8,
    pub payload: Vec<u8>,
}

pub fn segments(pcap: &[u8]) -> Vec<Segment> {
    assert_eq!(&pcap[..4], &[0xd4, 0xc3, 0xb2, 0xa1], "little-endian microsecond pcap");
    let mut out = Vec::new();
    let mut pos = 24;
    while pos + 16 <= pcap.len() {
        let u32_at = |p: usize| u32::from_le_bytes(pcap[p..p + 4].try_into().unwrap());
        let ts = u32_at(pos) as f64 + u32_at(pos + 4) as f64 / 1e6;
        let incl = u32_at(pos + 8) as usize;
        let frame = &pcap[pos + 16..pos + 16 + incl];
        pos += 16 + incl;
        let ip = &frame[14..];
        let ihl = (ip[0] & 0x0f) as usize * 4;
        let total = u16::from_be_bytes([ip[2], ip[3]]) as usize;
        let tcp = &ip[ihl..total];
        let doff = (tcp[12] >> 4) as usize * 4;
        out.push(Segment {
            ts,
            src: (ip[12..16].try_into().unwrap(), u16::from_be_bytes([tcp[0], tcp[1]])),
            dst: (ip[16..20].try_into().unwrap(), u16::from_be_bytes([tcp[2], tcp[3]])),
            flags: tcp[13],
            payload: tcp[doff..].to_vec(),
        });
    }
    out
}

/// One decoded OCPP-J array with the time of the segment that carried it.
#[derive(Debug, Clone)]
pub struct Message {
    pub ts: f64,
    pub from_client: bool,
    pub client: ([u8; 4], u16),
    pub value: Value,
}

impl Message {
    pub fn kind(&self) -> u64 {
        self.value[0].as_u64().unwrap()
    }
    pub fn unique_id(&self) -> &str {
        self.value[1].as_str().unwrap()
    }
    pub fn action(&self) -> Option<&str> {
        (self.kind() == 2).then(|| self.value[2].as_str().unwrap())
    }
    pub fn payload(&self) -> &Value {
        if self.kind() == 2 {
            &self.value[3]
        } else {
            &self.value[2]
        }
    }
}

/// Concatenates each direction's payload in capture order (the simulator
/// never reorders or drops) and decodes the WebSocket frames after the
/// HTTP head.
pub fn messages(pcap: &[u8]) -> Vec<Message> {
    let segs = segments(pcap);
    // Client endpoint: the side that sent the SYN.
    let mut client_of: BTreeMap<(([u8; 4], u16), ([u8; 4], u16)), ([u8; 4], u16)> = BTreeMap::new();
    let mut streams: BTreeMap<(([u8; 4], u16), ([u8; 4], u16)), Vec<(f64, Vec<u8>)>> = BTreeMap::new();
    for s in &segs {
        let key = if s.src < s.dst { (s.src, s.dst) } else { (s.dst, s.src) };
        if s.flags & 0x12 == 0x02 {
            client_of.insert(key, s.src);
        }
        if !s.payload.is_empty() {
            streams.entry((s.src, s.dst)).or_default().push((s.ts, s.payload.clone()));
        }
    }
    let mut out = Vec::new();
    for ((src, dst), chunks) in streams {
        let key = if src < dst { (src, dst) } else { (dst, src) };
        let client = client_of[&key];
        let mut bytes = Vec::new();
        let mut starts = Vec::new();
        for (ts, c) in &chunks {
            starts.push((bytes.len(), *ts));
            bytes.extend_from_slice(c);
        }
        let ts_at = |off: usize| starts.iter().rev().find(|(o, _)| *o <= off).unwrap().1;
        let mut pos = match bytes.windows(4).position(|w| w == b"\r\n\r\n") {
            Some(p) if bytes.starts_with(b"GET ") || bytes.starts_with(b"HTTP/") => p + 4,
            _ => 0,
        };
        while pos + 2 <= bytes.len() {
            let start = pos;
            let opcode = bytes[pos] & 0x0f;
            let masked = bytes[pos + 1] & 0x80 != 0;
            let mut len = (bytes[pos + 1] & 0x7f) as usize;
            pos += 2;
            if len == 126 {
                len = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]) as usize;
                pos += 2;
            }
            let mut key = [0u8; 4];
            if masked {
                key.copy_from_slice(&bytes[pos..pos + 4]);
                pos += 4;
            }
            let mut data = bytes[pos..pos + len].to_vec();
            pos += len;
            for (i, b) in data.iter_mut().enumerate() {
                *b ^= key[i % 4];
            }
            if opcode == 1 {
                out.push(Message {
                    ts: ts_at(start),
                    from_client: src == client,
                    client,
                    value: serde_json::from_slice(&data).unwrap(),
                });
            }
        }
    }
    out.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    out
}

pub fn calls<'a>(msgs: &'a [Message], action: &str) -> Vec<&'a Message> {
    msgs.iter().filter(|m| m.action() == Some(action)).collect()
}

/// The response to `call`, if any.
pub fn result_of<'a>(msgs: &'a [Message], call: &Message) -> Option<&'a Message> {
    msgs.iter()
        .find(|m| m.kind() != 2 && m.client == call.client && m.unique_id() == call.unique_id())
}
