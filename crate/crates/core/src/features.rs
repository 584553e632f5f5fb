//! The 55-column OCPP flow feature vector.
//!
//! Column order and spelling follow the OCPPFlowMeter schema,
//! including its `packts` and `CWE` spellings. Counts over the HTTP and
//! OCPP layers are message counts; OCPP action counts consider CALLs only.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde_json::Value;

use crate::flow::{AppLayer, Flow};
use crate::http::HttpKind;
use crate::ocpp::{MessageType, OcppMessage};
use crate::packet::TcpFlags;
use crate::reassembly::Direction;
use crate::time::Timestamp;
use crate::websocket::{OPCODE_BINARY, OPCODE_CLOSE, OPCODE_PING, OPCODE_PONG, OPCODE_TEXT};

/// Bumped whenever a column is added, removed or changes meaning.
pub const FEATURE_SCHEMA_VERSION: &str = "ocppflowmeter-55/v1";

pub const UNLABELLED: &str = "unlabelled";

pub const FEATURE_NAMES: [&str; 55] = [
    "flow_id",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "total_flow_packets",
    "total_fw_packets",
    "total_bw_packets",
    "flow_duration",
    "flow_down_up_ratio",
    "flow_total_SYN_flag",
    "flow_total_RST_flag",
    "flow_total_PSH_flag",
    "flow_total_ACK_flag",
    "flow_total_URG_flag",
    "flow_total_CWE_flag",
    "flow_total_ECE_flag",
    "flow_total_FIN_flag",
    "flow_start_timestamp",
    "flow_end_timestamp",
    "flow_total_http_get_packets",
    "flow_total_http_2xx_packets",
    "flow_total_http_4xx_packets",
    "flow_total_http_5xx_packets",
    "flow_websocket_packts_per_second",
    "fw_websocket_packts_per_second",
    "bw_websocket_packts_per_second",
    "flow_websocket_bytes_per_second",
    "fw_websocket_bytes_per_second",
    "bw_websocket_bytes_per_second",
    "flow_total_websocket_ping_packets",
    "flow_total_websocket_pong_packets",
    "flow_total_websocket_close_packets",
    "flow_total_websocket_data_messages",
    "flow_total_ocpp16_heartbeat_packets",
    "flow_total_ocpp16_resetHard_packets",
    "flow_total_ocpp16_resetSoft_packets",
    "flow_total_ocpp16_unlockconnector_packets",
    "flow_total_ocpp16_starttransaction_packets",
    "flow_total_ocpp16_remotestarttransaction_packets",
    "flow_total_ocpp16_authorize_not_accepted_packets",
    "flow_total_ocpp16_setchargingprofile_packets",
    "flow_avg_ocpp16_setchargingprofile_limit",
    "flow_max_ocpp16_setchargingprofile_limit",
    "flow_min_ocpp16_setchargingprofile_limit",
    "flow_avg_ocpp16_setchargingprofile_minchargingrate",
    "flow_min_ocpp16_setchargingprofile_minchargingrate",
    "flow_max_ocpp16_setchargingprofile_minchargingrate",
    "flow_total_ocpp16_metervalues",
    "flow_min_ocpp16_metervalues_soc",
    "flow_max_ocpp16_metervalues_soc",
    "flow_avg_ocpp16_metervalues_wh_diff",
    "flow_max_ocpp16_metervalues_wh_diff",
    "flow_min_ocpp16_metervalues_wh_diff",
    "label",
];

/// Columns fed to the classifier: packet/flag statistics and every
/// HTTP/WebSocket/OCPP column. Identifiers, addresses, ports, timestamps
/// and the label are excluded.
pub const MODEL_FEATURE_NAMES: [&str; 47] = {
    let mut out = [""; 47];
    let mut i = 0;
    let mut n = 0;
    while i < 55 {
        // Columns 6..=18 and 21..=54 (1-based).
        if (i >= 5 && i <= 17) || (i >= 20 && i <= 53) {
            out[n] = FEATURE_NAMES[i];
            n += 1;
        }
        i += 1;
    }
    out
};

pub const MODEL_FEATURE_COUNT: usize = MODEL_FEATURE_NAMES.len();

/// Per-flow feature record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub flow_id: String,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub flow_start_timestamp: Timestamp,
    pub flow_end_timestamp: Timestamp,
    /// Numeric columns in schema order (columns 6..=18 and 21..=54).
    pub values: [f64; MODEL_FEATURE_COUNT],
    pub label: String,
}

impl FeatureVector {
    pub fn index_of(name: &str) -> Option<usize> {
        MODEL_FEATURE_NAMES.iter().position(|n| *n == name)
    }

    /// Value of a numeric column by its schema name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Self::index_of(name).map(|i| self.values[i])
    }

    fn set(&mut self, name: &str, v: f64) {
        let i = Self::index_of(name).unwrap_or_else(|| panic!("unknown feature column {name}"));
        self.values[i] = v;
    }

    /// CSV cells in [`FEATURE_NAMES`] order.
    pub fn to_record(&self) -> Vec<String> {
        FEATURE_NAMES
            .iter()
            .map(|name| match *name {
                "flow_id" => self.flow_id.clone(),
                "src_ip" => self.src_ip.to_string(),
                "dst_ip" => self.dst_ip.to_string(),
                "src_port" => self.src_port.to_string(),
                "dst_port" => self.dst_port.to_string(),
                "flow_start_timestamp" => self.flow_start_timestamp.to_string(),
                "flow_end_timestamp" => self.flow_end_timestamp.to_string(),
                "label" => self.label.clone(),
                other => format_number(self.get(other).expect("numeric column")),
            })
            .collect()
    }

    /// Inverse of [`FeatureVector::to_record`].
    pub fn from_record<S: AsRef<str>>(cells: &[S]) -> Result<Self, String> {
        if cells.len() < FEATURE_NAMES.len() {
            return Err(format!("expected {} columns, found {}", FEATURE_NAMES.len(), cells.len()));
        }
        let cell = |i: usize| cells[i].as_ref().trim();
        let bad = |i: usize| format!("bad value {:?} in column {}", cells[i].as_ref(), FEATURE_NAMES[i]);
        let mut fv = FeatureVector {
            flow_id: cell(0).to_string(),
            src_ip: cell(1).parse().map_err(|_| bad(1))?,
            dst_ip: cell(2).parse().map_err(|_| bad(2))?,
            src_port: cell(3).parse().map_err(|_| bad(3))?,
            dst_port: cell(4).parse().map_err(|_| bad(4))?,
            flow_start_timestamp: cell(18).parse().map_err(|_| bad(18))?,
            flow_end_timestamp: cell(19).parse().map_err(|_| bad(19))?,
            values: [0.0; MODEL_FEATURE_COUNT],
            label: cell(54).to_string(),
        };
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            if let Some(j) = Self::index_of(name) {
                fv.values[j] = cell(i).parse().map_err(|_| bad(i))?;
            }
        }
        Ok(fv)
    }
}

/// Shortest round-trip decimal; integral values print without a fraction.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn per_second(count: f64, duration: f64) -> f64 {
    if duration > 0.0 {
        count / duration
    } else {
        0.0
    }
}

/// Mean, max and min of `values`; all zero when empty.
fn summarize(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let sum: f64 = values.iter().sum();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (sum / values.len() as f64, max, min)
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// `chargingSchedulePeriod` may be a list or, as in some deployments, a
/// single object.
fn as_list(v: &Value) -> Vec<&Value> {
    match v {
        Value::Array(items) => items.iter().collect(),
        Value::Null => Vec::new(),
        other => vec![other],
    }
}

/// Every `limit` of every schedule period in a SetChargingProfile payload.
pub fn charging_profile_limits(payload: &Value) -> Vec<f64> {
    let schedule = &payload["csChargingProfiles"]["chargingSchedule"];
    as_list(&schedule["chargingSchedulePeriod"])
        .into_iter()
        .filter_map(|p| number(&p["limit"]))
        .collect()
}

pub fn charging_profile_min_rate(payload: &Value) -> Option<f64> {
    number(&payload["csChargingProfiles"]["chargingSchedule"]["minChargingRate"])
}

const ENERGY_REGISTER: &str = "Energy.Active.Import.Register";

/// Sampled values of a MeterValues payload as `(measurand, value)`; an
/// absent measurand means the energy import register. kWh is scaled to Wh.
pub fn meter_samples(payload: &Value) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for mv in as_list(&payload["meterValue"]) {
        for sv in as_list(&mv["sampledValue"]) {
            let Some(mut value) = number(&sv["value"]) else { continue };
            let measurand = sv["measurand"].as_str().unwrap_or(ENERGY_REGISTER).to_string();
            if measurand == ENERGY_REGISTER && sv["unit"].as_str() == Some("kWh") {
                value *= 1000.0;
            }
            out.push((measurand, value));
        }
    }
    out
}

fn authorization_rejected(msg: &OcppMessage) -> bool {
    msg.is_result("Authorize")
        && matches!(
            msg.payload["idTagInfo"]["status"].as_str(),
            Some("Invalid" | "Blocked" | "Expired")
        )
}

/// Computes the feature vector of an assembled flow.
pub fn compute_features(flow: &Flow) -> FeatureVector {
    let app = flow.parse();
    compute_features_with(flow, &app)
}

/// As [`compute_features`], reusing an already parsed application layer.
pub fn compute_features_with(flow: &Flow, app: &AppLayer) -> FeatureVector {
    let mut fv = FeatureVector {
        flow_id: flow.flow_id(),
        src_ip: flow.src.ip,
        dst_ip: flow.dst.ip,
        src_port: flow.src.port,
        dst_port: flow.dst.port,
        flow_start_timestamp: flow.start_ts,
        flow_end_timestamp: flow.end_ts,
        values: [0.0; MODEL_FEATURE_COUNT],
        label: UNLABELLED.to_string(),
    };
    let duration = flow.duration_secs();

    let fw = flow.packets.iter().filter(|p| p.direction == Direction::Forward).count() as f64;
    let bw = flow.packets.len() as f64 - fw;
    fv.set("total_flow_packets", flow.packets.len() as f64);
    fv.set("total_fw_packets", fw);
    fv.set("total_bw_packets", bw);
    fv.set("flow_duration", duration);
    fv.set("flow_down_up_ratio", if fw > 0.0 { bw / fw } else { 0.0 });
    for (name, flag) in [
        ("flow_total_SYN_flag", TcpFlags::SYN),
        ("flow_total_RST_flag", TcpFlags::RST),
        ("flow_total_PSH_flag", TcpFlags::PSH),
        ("flow_total_ACK_flag", TcpFlags::ACK),
        ("flow_total_URG_flag", TcpFlags::URG),
        ("flow_total_CWE_flag", TcpFlags::CWR),
        ("flow_total_ECE_flag", TcpFlags::ECE),
        ("flow_total_FIN_flag", TcpFlags::FIN),
    ] {
        let n = flow.packets.iter().filter(|p| p.packet.flags.contains(flag)).count();
        fv.set(name, n as f64);
    }

    let count_http = |pred: &dyn Fn(u16) -> bool| {
        app.http
            .iter()
            .filter(|e| e.kind == HttpKind::Response && e.status_code.is_some_and(pred))
            .count() as f64
    };
    let gets = app
        .http
        .iter()
        .filter(|e| e.kind == HttpKind::Request && e.method.as_deref() == Some("GET"))
        .count();
    fv.set("flow_total_http_get_packets", gets as f64);
    fv.set("flow_total_http_2xx_packets", count_http(&|c| (200..300).contains(&c)));
    fv.set("flow_total_http_4xx_packets", count_http(&|c| (400..500).contains(&c)));
    fv.set("flow_total_http_5xx_packets", count_http(&|c| (500..600).contains(&c)));

    let frames_in = |d: Option<Direction>| app.frames.iter().filter(move |f| d.is_none_or(|d| f.direction == d));
    for (prefix, dir) in [("flow", None), ("fw", Some(Direction::Forward)), ("bw", Some(Direction::Backward))] {
        let count = frames_in(dir).count() as f64;
        let bytes: usize = frames_in(dir).map(|f| f.payload.len()).sum();
        fv.set(&format!("{prefix}_websocket_packts_per_second"), per_second(count, duration));
        fv.set(&format!("{prefix}_websocket_bytes_per_second"), per_second(bytes as f64, duration));
    }
    let opcode_count = |ops: &[u8]| frames_in(None).filter(|f| ops.contains(&f.opcode)).count() as f64;
    fv.set("flow_total_websocket_ping_packets", opcode_count(&[OPCODE_PING]));
    fv.set("flow_total_websocket_pong_packets", opcode_count(&[OPCODE_PONG]));
    fv.set("flow_total_websocket_close_packets", opcode_count(&[OPCODE_CLOSE]));
    fv.set("flow_total_websocket_data_messages", opcode_count(&[OPCODE_TEXT, OPCODE_BINARY]));

    let msgs = &app.ocpp.messages;
    let calls = |action: &str| msgs.iter().filter(|m| m.is_call(action)).count() as f64;
    fv.set("flow_total_ocpp16_heartbeat_packets", calls("Heartbeat"));
    let resets = |kind: &str| {
        msgs.iter()
            .filter(|m| m.is_call("Reset") && m.payload["type"].as_str() == Some(kind))
            .count() as f64
    };
    fv.set("flow_total_ocpp16_resetHard_packets", resets("Hard"));
    fv.set("flow_total_ocpp16_resetSoft_packets", resets("Soft"));
    fv.set("flow_total_ocpp16_unlockconnector_packets", calls("UnlockConnector"));
    fv.set("flow_total_ocpp16_starttransaction_packets", calls("StartTransaction"));
    fv.set("flow_total_ocpp16_remotestarttransaction_packets", calls("RemoteStartTransaction"));
    let rejected = msgs.iter().filter(|m| authorization_rejected(m)).count();
    fv.set("flow_total_ocpp16_authorize_not_accepted_packets", rejected as f64);

    let profiles: Vec<&OcppMessage> = msgs.iter().filter(|m| m.is_call("SetChargingProfile")).collect();
    fv.set("flow_total_ocpp16_setchargingprofile_packets", profiles.len() as f64);
    let limits: Vec<f64> = profiles.iter().flat_map(|m| charging_profile_limits(&m.payload)).collect();
    let (avg, max, min) = summarize(&limits);
    fv.set("flow_avg_ocpp16_setchargingprofile_limit", avg);
    fv.set("flow_max_ocpp16_setchargingprofile_limit", max);
    fv.set("flow_min_ocpp16_setchargingprofile_limit", min);
    let rates: Vec<f64> = profiles.iter().filter_map(|m| charging_profile_min_rate(&m.payload)).collect();
    let (avg, max, min) = summarize(&rates);
    fv.set("flow_avg_ocpp16_setchargingprofile_minchargingrate", avg);
    fv.set("flow_min_ocpp16_setchargingprofile_minchargingrate", min);
    fv.set("flow_max_ocpp16_setchargingprofile_minchargingrate", max);

    let meter_msgs: Vec<&OcppMessage> = msgs
        .iter()
        .filter(|m| m.message_type == MessageType::Call && m.action == "MeterValues")
        .collect();
    fv.set("flow_total_ocpp16_metervalues", meter_msgs.len() as f64);
    let mut soc = Vec::new();
    let mut last_energy: BTreeMap<i64, f64> = BTreeMap::new();
    let mut diffs = Vec::new();
    for m in &meter_msgs {
        let samples = meter_samples(&m.payload);
        soc.extend(samples.iter().filter(|(k, _)| k == "SoC").map(|(_, v)| *v));
        let energy = samples.iter().rev().find(|(k, _)| k == ENERGY_REGISTER).map(|(_, v)| *v);
        if let Some(e) = energy {
            let connector = m.payload["connectorId"].as_i64().unwrap_or(0);
            if let Some(prev) = last_energy.insert(connector, e) {
                diffs.push(e - prev);
            }
        }
    }
    let (_, soc_max, soc_min) = summarize(&soc);
    fv.set("flow_min_ocpp16_metervalues_soc", soc_min);
    fv.set("flow_max_ocpp16_metervalues_soc", soc_max);
    let (avg, max, min) = summarize(&diffs);
    fv.set("flow_avg_ocpp16_metervalues_wh_diff", avg);
    fv.set("flow_max_ocpp16_metervalues_wh_diff", max);
    fv.set("flow_min_ocpp16_metervalues_wh_diff", min);
    fv
}
