//! Security events and their RFC 5424 rendering.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::net::{Ipv4Addr, SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};

use flowguard_core::{FeatureVector, Timestamp, TrafficClass};

/// log-audit facility (13), warning severity (4).
pub const PRI: u8 = 13 * 8 + 4;
pub const APP_NAME: &str = "ocpp-flowguard";
/// Documentation enterprise number from RFC 5612.
pub const SD_ID: &str = "flowguard@32473";

/// Columns reported with each detection, by class.
pub fn relevant_features(class: TrafficClass) -> &'static [&'static str] {
    match class {
        TrafficClass::Normal => &[],
        TrafficClass::ProfileManipulation => &["flow_max_ocpp16_setchargingprofile_limit"],
        TrafficClass::DenialOfCharge => &[
            "flow_total_ocpp16_starttransaction_packets",
            "flow_total_ocpp16_authorize_not_accepted_packets",
            "flow_total_ocpp16_remotestarttransaction_packets",
        ],
        TrafficClass::HeartbeatFlood => &[
            "total_flow_packets",
            "total_fw_packets",
            "total_bw_packets",
            "flow_total_PSH_flag",
            "flow_total_ACK_flag",
            "flow_total_websocket_data_messages",
            "flow_total_ocpp16_heartbeat_packets",
        ],
        TrafficClass::UnauthorizedAccess => {
            &["flow_total_FIN_flag", "flow_total_http_4xx_packets", "flow_total_http_get_packets"]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityEvent {
    /// End of the flow that triggered the detection.
    pub timestamp: Timestamp,
    pub flow_id: String,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub label: TrafficClass,
    pub confidence: f64,
    pub features: Vec<(String, f64)>,
}

impl SecurityEvent {
    pub fn from_flow(fv: &FeatureVector, label: TrafficClass, confidence: f64) -> Self {
        SecurityEvent {
            timestamp: fv.flow_end_timestamp,
            flow_id: fv.flow_id.clone(),
            src_ip: fv.src_ip,
            dst_ip: fv.dst_ip,
            label,
            confidence,
            features: relevant_features(label)
                .iter()
                .map(|n| (n.to_string(), fv.get(n).expect("schema column")))
                .collect(),
        }
    }
}

/// Escapes `"`, `\` and `]` inside an SD-PARAM value.
fn sd_escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        if matches!(c, '"' | '\\' | ']') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn rfc3339(ts: Timestamp) -> String {
    let dt = DateTime::<Utc>::from_timestamp(ts.secs(), ts.subsec_micros() * 1_000).unwrap_or_default();
    dt.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Printable US-ASCII without spaces, at most `max` characters, or "-".
fn header_field(v: &str, max: usize) -> String {
    let clean: String = v.chars().filter(|c| c.is_ascii_graphic()).take(max).collect();
    if clean.is_empty() {
        "-".to_string()
    } else {
        clean
    }
}

/// One RFC 5424 message, without any trailing newline.
pub fn format_rfc5424(event: &SecurityEvent, hostname: &str) -> String {
    let mut sd = format!(
        "[{SD_ID} flow_id=\"{}\" label=\"{}\" confidence=\"{:.6}\" src=\"{}\" dst=\"{}\"",
        sd_escape(&event.flow_id),
        event.label,
        event.confidence,
        event.src_ip,
        event.dst_ip
    );
    for (name, value) in &event.features {
        // Column names can exceed the 32-character SD-NAME limit, so each
        // feature travels as a repeated `feature` parameter.
        sd.push_str(&format!(" feature=\"{}\"", sd_escape(&format!("{name}={value}"))));
    }
    sd.push(']');
    format!(
        "<{PRI}>1 {} {} {APP_NAME} - {} {sd} {} detected on flow {} ({} -> {}, confidence {:.3})",
        rfc3339(event.timestamp),
        header_field(hostname, 255),
        header_field(event.label.as_str(), 32),
        event.label,
        event.flow_id,
        event.src_ip,
        event.dst_ip,
        event.confidence
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkConfig {
    /// Appends one message per line.
    File(PathBuf),
    /// One datagram per message.
    Udp(String),
}

enum Target {
    File(File),
    Udp { socket: UdpSocket, addr: SocketAddr },
}

/// Serializes writes from concurrent detection workers.
pub struct SyslogSink {
    hostname: String,
    target: Mutex<Target>,
}

impl SyslogSink {
    pub fn open(config: &SinkConfig, hostname: &str) -> io::Result<Self> {
        let target = match config {
            SinkConfig::File(path) => Target::File(OpenOptions::new().create(true).append(true).open(path)?),
            SinkConfig::Udp(dest) => {
                let addr = dest
                    .to_socket_addrs()?
                    .next()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {dest}")))?;
                let bind: SocketAddr = if addr.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal");
                Target::Udp { socket: UdpSocket::bind(bind)?, addr }
            }
        };
        Ok(SyslogSink { hostname: hostname.to_string(), target: Mutex::new(target) })
    }

    /// Sends one event. A failed UDP send is retried once and then dropped
    /// with a local error so detection never blocks on the collector.
    pub fn emit(&self, event: &SecurityEvent) -> io::Result<()> {
        let msg = format_rfc5424(event, &self.hostname);
        let mut target = self.target.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *target {
            Target::File(f) => {
                f.write_all(format!("{msg}\n").as_bytes())?;
                f.flush()
            }
            Target::Udp { socket, addr } => {
                if socket.send_to(msg.as_bytes(), *addr).is_err() {
                    if let Err(e) = socket.send_to(msg.as_bytes(), *addr) {
                        log::error!("dropping syslog event for flow {}: {e}", event.flow_id);
                    }
                }
                Ok(())
            }
        }
    }
}
