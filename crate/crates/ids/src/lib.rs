//! Detection pipeline: capture in, per-flow verdicts and syslog security
//! events out, plus the `flowguard` command-line front end.

pub mod cli;
pub mod detect;
pub mod evaluate;
pub mod syslog;
pub mod watch;

pub use detect::{detect, write_audit, Detection, Verdict};
pub use syslog::{format_rfc5424, SecurityEvent, SinkConfig, SyslogSink};

#[derive(Debug, thiserror::Error)]
pub enum IdsError {
    #[error(transparent)]
    Model(#[from] flowguard_fl::FlError),
    #[error(transparent)]
    Csv(#[from] flowguard_core::csv_io::CsvError),
    #[error("csv: {0}")]
    CsvWrite(#[from] csv::Error),
    #[error(transparent)]
    Config(#[from] flowguard_sim::ConfigError),
    #[error("{0}")]
    Input(String),
}
