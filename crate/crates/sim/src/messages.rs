//! OCPP 1.6-J payloads and HTTP handshake texts produced by the simulator.

use base64::Engine;
use chrono::{DateTime, SecondsFormat};
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use flowguard_core::Timestamp;

const WS_GUID: &str = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

/// ISO 8601 UTC text with millisecond precision.
pub fn iso_time(ts: Timestamp) -> String {
    let dt = DateTime::from_timestamp(ts.secs(), ts.subsec_micros() * 1000).unwrap_or_default();
    dt.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn websocket_accept(key: &str) -> String {
    let mut sha = Sha1::new();
    sha.update(key.as_bytes());
    sha.update(WS_GUID.as_bytes());
    base64::engine::general_purpose::STANDARD.encode(sha.finalize())
}

pub fn websocket_key(nonce: [u8; 16]) -> String {
    base64::engine::general_purpose::STANDARD.encode(nonce)
}

pub fn upgrade_request(path: &str, host: &str, key: &str) -> String {
    format!(
        "GET {path} HTTP/1.1\r\nHost: {host}\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n\
         Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Protocol: ocpp1.6\r\nSec-WebSocket-Version: 13\r\n\r\n"
    )
}

pub fn switching_protocols(key: &str) -> String {
    format!(
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n\
         Sec-WebSocket-Accept: {}\r\nSec-WebSocket-Protocol: ocpp1.6\r\n\r\n",
        websocket_accept(key)
    )
}

pub fn not_found() -> &'static str {
    "HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
}

pub fn boot_notification(model: &str, serial: &str) -> Value {
    json!({
        "chargePointModel": model,
        "chargePointVendor": "FlowGuardSim",
        "chargePointSerialNumber": serial,
        "firmwareVersion": "1.6.3",
    })
}

pub fn boot_conf(now: Timestamp, interval: f64) -> Value {
    json!({"currentTime": iso_time(now), "interval": interval.round() as i64, "status": "Accepted"})
}

pub fn heartbeat_conf(now: Timestamp) -> Value {
    json!({"currentTime": iso_time(now)})
}

pub fn id_tag_info(status: &str) -> Value {
    json!({"idTagInfo": {"status": status}})
}

pub fn remote_start(connector_id: u32, id_tag: &str) -> Value {
    json!({"connectorId": connector_id, "idTag": id_tag})
}

pub fn status(status: &str) -> Value {
    json!({"status": status})
}

pub fn authorize(id_tag: &str) -> Value {
    json!({"idTag": id_tag})
}

pub fn start_transaction(connector_id: u32, id_tag: &str, meter_start: i64, now: Timestamp) -> Value {
    json!({
        "connectorId": connector_id,
        "idTag": id_tag,
        "meterStart": meter_start,
        "timestamp": iso_time(now),
    })
}

pub fn start_transaction_conf(status: &str, transaction_id: i64) -> Value {
    json!({"idTagInfo": {"status": status}, "transactionId": transaction_id})
}

pub fn status_notification(connector_id: u32, state: &str, now: Timestamp) -> Value {
    json!({
        "connectorId": connector_id,
        "errorCode": "NoError",
        "status": state,
        "timestamp": iso_time(now),
    })
}

pub fn meter_values(connector_id: u32, transaction_id: i64, now: Timestamp, wh: i64, soc: i64, watts: i64) -> Value {
    json!({
        "connectorId": connector_id,
        "transactionId": transaction_id,
        "meterValue": [{
            "timestamp": iso_time(now),
            "sampledValue": [
                {"value": wh.to_string(), "context": "Sample.Periodic",
                 "measurand": "Energy.Active.Import.Register", "unit": "Wh"},
                {"value": soc.to_string(), "context": "Sample.Periodic", "measurand": "SoC", "unit": "Percent"},
                {"value": watts.to_string(), "context": "Sample.Periodic",
                 "measurand": "Power.Active.Import", "unit": "W"},
            ],
        }],
    })
}

pub fn stop_transaction(transaction_id: i64, id_tag: &str, meter_stop: i64, now: Timestamp, reason: &str) -> Value {
    json!({
        "transactionId": transaction_id,
        "idTag": id_tag,
        "meterStop": meter_stop,
        "timestamp": iso_time(now),
        "reason": reason,
    })
}

/// A SetChargingProfile request with one schedule period per limit,
/// periods starting an hour apart.
pub fn set_charging_profile(
    connector_id: u32,
    profile_id: i64,
    limits: &[f64],
    min_rate: Option<f64>,
) -> Value {
    let periods: Vec<Value> = limits
        .iter()
        .enumerate()
        .map(|(i, l)| json!({"startPeriod": i * 3600, "limit": l, "numberPhases": 3}))
        .collect();
    let mut schedule = json!({"chargingRateUnit": "A", "chargingSchedulePeriod": periods});
    if let Some(r) = min_rate {
        schedule["minChargingRate"] = json!(r);
    }
    json!({
        "connectorId": connector_id,
        "csChargingProfiles": {
            "chargingProfileId": profile_id,
            "stackLevel": 0,
            "chargingProfilePurpose": "TxDefaultProfile",
            "chargingProfileKind": "Absolute",
            "chargingSchedule": schedule,
        },
    })
}

/// Rewrites every `limit` of every schedule period, whether the periods are
/// a list or a single object. Returns how many values were replaced.
pub fn rewrite_profile_limits(payload: &mut Value, limit: f64) -> usize {
    let periods = &mut payload["csChargingProfiles"]["chargingSchedule"]["chargingSchedulePeriod"];
    let mut n = 0;
    let mut set = |p: &mut Value| {
        if p.get("limit").is_some() {
            p["limit"] = json!(limit);
            n += 1;
        }
    };
    match periods {
        Value::Array(list) => list.iter_mut().for_each(&mut set),
        Value::Object(_) => set(periods),
        _ => {}
    }
    n
}

pub fn unlock_connector(connector_id: u32) -> Value {
    json!({"connectorId": connector_id})
}
