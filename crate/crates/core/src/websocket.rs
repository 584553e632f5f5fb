//! RFC 6455 frame decoding (with unmasking) and encoding.

use serde::{Deserialize, Serialize};

use crate::reassembly::{Direction, DirectionalStream};
use crate::time::Timestamp;

pub const OPCODE_CONTINUATION: u8 = 0x0;
pub const OPCODE_TEXT: u8 = 0x1;
pub const OPCODE_BINARY: u8 = 0x2;
pub const OPCODE_CLOSE: u8 = 0x8;
pub const OPCODE_PING: u8 = 0x9;
pub const OPCODE_PONG: u8 = 0xA;

/// Frames larger than this are treated as garbage rather than buffered.
const MAX_FRAME_PAYLOAD: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsFrame {
    pub fin: bool,
    pub opcode: u8,
    pub masked: bool,
    /// Payload after unmasking.
    pub payload: Vec<u8>,
    pub direction: Direction,
    pub timestamp: Timestamp,
}

impl WsFrame {
    pub fn is_data(&self) -> bool {
        matches!(self.opcode, OPCODE_TEXT | OPCODE_BINARY)
    }

    pub fn is_control(&self) -> bool {
        self.opcode & 0x8 != 0
    }
}

fn valid_opcode(op: u8) -> bool {
    matches!(
        op,
        OPCODE_CONTINUATION | OPCODE_TEXT | OPCODE_BINARY | OPCODE_CLOSE | OPCODE_PING | OPCODE_PONG
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    /// More bytes are needed to finish the frame.
    Incomplete,
    /// The bytes cannot be a valid frame.
    Malformed,
}

/// Decodes one frame at the start of `buf`, returning it and its encoded
/// length. `direction`/`timestamp` are attached to the result as-is.
pub fn decode_frame(
    buf: &[u8],
    direction: Direction,
    timestamp: Timestamp,
) -> Result<(WsFrame, usize), FrameError> {
    if buf.len() < 2 {
        return Err(FrameError::Incomplete);
    }
    let b0 = buf[0];
    let b1 = buf[1];
    let fin = b0 & 0x80 != 0;
    let opcode = b0 & 0x0F;
    if b0 & 0x70 != 0 || !valid_opcode(opcode) {
        return Err(FrameError::Malformed);
    }
    let masked = b1 & 0x80 != 0;
    let mut pos = 2;
    let len = match b1 & 0x7F {
        126 => {
            if buf.len() < pos + 2 {
                return Err(FrameError::Incomplete);
            }
            let l = u64::from(u16::from_be_bytes([buf[2], buf[3]]));
            pos += 2;
            l
        }
        127 => {
            if buf.len() < pos + 8 {
                return Err(FrameError::Incomplete);
            }
            let mut a = [0u8; 8];
            a.copy_from_slice(&buf[2..10]);
            pos += 8;
            let l = u64::from_be_bytes(a);
            if l >> 63 != 0 {
                return Err(FrameError::Malformed);
            }
            l
        }
        l => u64::from(l),
    };
    if opcode & 0x8 != 0 && (len > 125 || !fin) {
        return Err(FrameError::Malformed);
    }
    if len > MAX_FRAME_PAYLOAD {
        return Err(FrameError::Malformed);
    }
    let key = if masked {
        if buf.len() < pos + 4 {
            return Err(FrameError::Incomplete);
        }
        let k = [buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]];
        pos += 4;
        Some(k)
    } else {
        None
    };
    let len = len as usize;
    if buf.len() < pos + len {
        return Err(FrameError::Incomplete);
    }
    let mut payload = buf[pos..pos + len].to_vec();
    if let Some(k) = key {
        apply_mask(&mut payload, k);
    }
    Ok((
        WsFrame { fin, opcode, masked, payload, direction, timestamp },
        pos + len,
    ))
}

/// XORs `data` in place with the repeating 4-byte `key`.
pub fn apply_mask(data: &mut [u8], key: [u8; 4]) {
    for (i, b) in data.iter_mut().enumerate() {
        *b ^= key[i % 4];
    }
}

/// Encodes a frame; `mask` is required for client-to-server frames.
pub fn encode_frame(fin: bool, opcode: u8, payload: &[u8], mask: Option<[u8; 4]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 14);
    out.push(if fin { 0x80 } else { 0 } | (opcode & 0x0F));
    let mask_bit = if mask.is_some() { 0x80 } else { 0 };
    match payload.len() {
        n if n < 126 => out.push(mask_bit | n as u8),
        n if n <= usize::from(u16::MAX) => {
            out.push(mask_bit | 126);
            out.extend_from_slice(&(n as u16).to_be_bytes());
        }
        n => {
            out.push(mask_bit | 127);
            out.extend_from_slice(&(n as u64).to_be_bytes());
        }
    }
    match mask {
        Some(k) => {
            out.extend_from_slice(&k);
            let start = out.len();
            out.extend_from_slice(payload);
            apply_mask(&mut out[start..], k);
        }
        None => out.extend_from_slice(payload),
    }
    out
}

/// Result of scanning a stream for frames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WsParse {
    pub frames: Vec<WsFrame>,
    /// Trailing bytes that did not form a whole frame.
    pub truncated: bool,
    pub malformed: bool,
}

/// Decodes back-to-back frames from `from` to the end of the contiguous
/// stream. Each frame carries the timestamp of the packet holding its
/// first byte.
pub fn parse_websocket(stream: &DirectionalStream, from: usize) -> WsParse {
    let mut out = WsParse::default();
    let mut pos = from;
    while pos < stream.bytes.len() {
        let ts = stream.timestamp_at(pos).unwrap_or_default();
        match decode_frame(&stream.bytes[pos..], stream.direction, ts) {
            Ok((frame, used)) => {
                out.frames.push(frame);
                pos += used;
            }
            Err(FrameError::Incomplete) => {
                out.truncated = true;
                break;
            }
            Err(FrameError::Malformed) => {
                out.malformed = true;
                break;
            }
        }
    }
    out
}

/// A data message: a text/binary frame plus any continuation frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WsMessage {
    pub opcode: u8,
    pub payload: Vec<u8>,
    pub direction: Direction,
    pub timestamp: Timestamp,
    pub complete: bool,
}

/// Joins fragmented data messages within one direction. Control frames
/// (which may be interleaved) and orphan continuation frames are ignored.
pub fn assemble_messages(frames: &[WsFrame]) -> Vec<WsMessage> {
    let mut out: Vec<WsMessage> = Vec::new();
    let mut open: Option<WsMessage> = None;
    for f in frames {
        if f.is_control() {
            continue;
        }
        if f.opcode == OPCODE_CONTINUATION {
            if let Some(m) = open.as_mut() {
                m.payload.extend_from_slice(&f.payload);
                if f.fin {
                    m.complete = true;
                    out.extend(open.take());
                }
            }
            continue;
        }
        if let Some(prev) = open.take() {
            out.push(prev);
        }
        let msg = WsMessage {
            opcode: f.opcode,
            payload: f.payload.clone(),
            direction: f.direction,
            timestamp: f.timestamp,
            complete: f.fin,
        };
        if f.fin {
            out.push(msg);
        } else {
            open = Some(msg);
        }
    }
    out.extend(open);
    out
}
