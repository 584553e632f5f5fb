//! OCPP 1.6-J message envelopes (CALL / CALLRESULT / CALLERROR).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::reassembly::Direction;
use crate::time::Timestamp;
use crate::websocket::{assemble_messages, WsFrame};

pub const UNKNOWN_ACTION: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageType {
    Call = 2,
    CallResult = 3,
    CallError = 4,
}

impl MessageType {
    pub fn from_id(id: u64) -> Option<Self> {
        match id {
            2 => Some(MessageType::Call),
            3 => Some(MessageType::CallResult),
            4 => Some(MessageType::CallError),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcppMessage {
    pub message_type: MessageType,
    pub unique_id: String,
    /// Set on CALL; resolved through the pending-call map otherwise.
    pub action: String,
    /// CALL / CALLRESULT payload, or the error details of a CALLERROR.
    pub payload: Value,
    pub error_code: Option<String>,
    pub direction: Direction,
    pub timestamp: Timestamp,
}

impl OcppMessage {
    pub fn is_call(&self, action: &str) -> bool {
        self.message_type == MessageType::Call && self.action == action
    }

    pub fn is_result(&self, action: &str) -> bool {
        self.message_type == MessageType::CallResult && self.action == action
    }
}

/// A decoded but not yet correlated OCPP-J array.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Call { unique_id: String, action: String, payload: Value },
    CallResult { unique_id: String, payload: Value },
    CallError { unique_id: String, error_code: String, description: String, details: Value },
}

/// Parses the JSON text of one OCPP-J message.
pub fn parse_envelope(text: &[u8]) -> Option<Envelope> {
    let value: Value = serde_json::from_slice(text).ok()?;
    let arr = value.as_array()?;
    let kind = MessageType::from_id(arr.first()?.as_u64()?)?;
    let unique_id = arr.get(1)?.as_str()?.to_string();
    match (kind, arr.len()) {
        (MessageType::Call, 4) => Some(Envelope::Call {
            unique_id,
            action: arr[2].as_str()?.to_string(),
            payload: arr[3].clone(),
        }),
        (MessageType::CallResult, 3) => Some(Envelope::CallResult {
            unique_id,
            payload: arr[2].clone(),
        }),
        (MessageType::CallError, 4 | 5) => Some(Envelope::CallError {
            unique_id,
            error_code: arr[2].as_str()?.to_string(),
            description: arr[3].as_str().unwrap_or_default().to_string(),
            details: arr.get(4).cloned().unwrap_or(Value::Null),
        }),
        _ => None,
    }
}

impl Envelope {
    pub fn to_json(&self) -> String {
        let v = match self {
            Envelope::Call { unique_id, action, payload } => {
                Value::Array(vec![2.into(), unique_id.as_str().into(), action.as_str().into(), payload.clone()])
            }
            Envelope::CallResult { unique_id, payload } => {
                Value::Array(vec![3.into(), unique_id.as_str().into(), payload.clone()])
            }
            Envelope::CallError { unique_id, error_code, description, details } => Value::Array(vec![
                4.into(),
                unique_id.as_str().into(),
                error_code.as_str().into(),
                description.as_str().into(),
                details.clone(),
            ]),
        };
        v.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcppParse {
    pub messages: Vec<OcppMessage>,
    /// Data messages that were not valid OCPP-J.
    pub skipped: usize,
}

/// Correlates OCPP messages across both directions of one flow.
///
/// Frames are grouped per direction into data messages, merged in time
/// order (forward first on ties), parsed, and each CALLRESULT/CALLERROR
/// takes the action of the earlier CALL with the same unique id.
pub fn parse_ocpp(frames: &[WsFrame]) -> OcppParse {
    let mut msgs = Vec::new();
    for dir in [Direction::Forward, Direction::Backward] {
        let dir_frames: Vec<WsFrame> = frames.iter().filter(|f| f.direction == dir).cloned().collect();
        msgs.extend(assemble_messages(&dir_frames));
    }
    // Stable sort keeps per-direction order for equal timestamps.
    msgs.sort_by_key(|m| (m.timestamp, m.direction));

    let mut pending: HashMap<String, String> = HashMap::new();
    let mut out = OcppParse::default();
    for m in msgs {
        let Some(env) = (if m.complete { parse_envelope(&m.payload) } else { None }) else {
            out.skipped += 1;
            continue;
        };
        let msg = match env {
            Envelope::Call { unique_id, action, payload } => {
                pending.insert(unique_id.clone(), action.clone());
                OcppMessage {
                    message_type: MessageType::Call,
                    unique_id,
                    action,
                    payload,
                    error_code: None,
                    direction: m.direction,
                    timestamp: m.timestamp,
                }
            }
            Envelope::CallResult { unique_id, payload } => OcppMessage {
                message_type: MessageType::CallResult,
                action: pending.remove(&unique_id).unwrap_or_else(|| UNKNOWN_ACTION.to_string()),
                unique_id,
                payload,
                error_code: None,
                direction: m.direction,
                timestamp: m.timestamp,
            },
            Envelope::CallError { unique_id, error_code, details, .. } => OcppMessage {
                message_type: MessageType::CallError,
                action: pending.remove(&unique_id).unwrap_or_else(|| UNKNOWN_ACTION.to_string()),
                unique_id,
                payload: details,
                error_code: Some(error_code),
                direction: m.direction,
                timestamp: m.timestamp,
            },
        };
        out.messages.push(msg);
    }
    out
}
