//! `flowguard` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use flowguard_core::csv_io::write_feature_csv;
use flowguard_core::truth::{apply_labels, read_truth, TruthRecord};
use flowguard_core::extract_pcap;
use flowguard_fl::{load_dataset, train, LocalConfig, Method, ModelFile, ServerHyper, TrainConfig};
use flowguard_sim::{simulate, write_pcap, write_truth, SimConfig};

use crate::detect::{audit_path_in, detect_file, detect_many};
use crate::evaluate::{results_table, score_predictions};
use crate::syslog::{SinkConfig, SyslogSink};
use crate::watch::Watcher;
use crate::IdsError;

#[derive(Debug, Parser)]
#[command(name = "flowguard", version, about = "OCPP 1.6-J flow extraction, federated training and detection")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled capture of charging-station traffic.
    Simulate(SimulateArgs),
    /// Compute per-flow features from a capture.
    Extract(ExtractArgs),
    /// Train a classifier with federated rounds, one client per hub.
    Train(TrainArgs),
    /// Classify flows in captures and emit syslog events for attacks.
    Detect(DetectArgs),
    /// Score audit CSVs against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub pcap: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub pcap: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fill the label column from this truth file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub truth: Vec<PathBuf>,
    #[arg(long, default_value = "fedavg", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 30)]
    pub rounds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = LocalConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = LocalConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = LocalConfig::default().learning_rate)]
    pub lr: f64,
    /// Proximal weight, used by fedprox only.
    #[arg(long, default_value_t = LocalConfig::default().mu)]
    pub mu: f64,
    /// Server learning rate for the adaptive methods.
    #[arg(long, default_value_t = ServerHyper::default().eta)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.3)]
    pub holdout: f64,
    /// Treat flows missing from the truth files as normal.
    #[arg(long)]
    pub benign_run: bool,
    /// Write per-round holdout metrics as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, num_args = 1.., required_unless_present = "watch", conflicts_with = "watch")]
    pub pcap: Vec<PathBuf>,
    /// Process captures dropped into this directory.
    #[arg(long)]
    pub watch: Option<PathBuf>,
    /// With --watch: process what is there and exit.
    #[arg(long, requires = "watch")]
    pub once: bool,
    #[arg(long, default_value_t = 2.0)]
    pub poll_secs: f64,
    #[arg(long)]
    pub model: PathBuf,
    /// Audit CSV for a single capture, or a directory for several.
    #[arg(long)]
    pub audit: PathBuf,
    #[arg(long, conflicts_with = "syslog_udp")]
    pub syslog_file: Option<PathBuf>,
    /// host:port of a syslog collector.
    #[arg(long)]
    pub syslog_udp: Option<String>,
    #[arg(long, default_value = "-")]
    pub hostname: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub pred: Vec<PathBuf>,
    /// One truth file shared by all predictions, or one per prediction.
    #[arg(long, num_args = 1.., required = true)]
    pub truth: Vec<PathBuf>,
    /// Row names; defaults to the prediction file stems.
    #[arg(long, num_args = 1..)]
    pub name: Vec<String>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> IdsError {
    IdsError::Input(format!("{}: {e}", path.display()))
}

fn run_simulate(a: SimulateArgs) -> Result<(), IdsError> {
    let mut cfg = match &a.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    let trace = simulate(&cfg)?;
    write_pcap(&trace, &a.pcap).map_err(|e| input_err(&a.pcap, e))?;
    write_truth(&trace, &a.truth).map_err(|e| input_err(&a.truth, e))?;
    println!("{} packets, {} truth records", trace.packets.len(), trace.truth.len());
    for r in &trace.reports {
        println!("{}: {} hits over {} connections", r.attack.kind.class(), r.hits, r.connections);
    }
    Ok(())
}

fn run_extract(a: ExtractArgs) -> Result<(), IdsError> {
    let mut ex = extract_pcap(&a.pcap).map_err(|e| input_err(&a.pcap, e))?;
    if let Some(t) = &a.truth {
        let truth = read_truth(t).map_err(|e| input_err(t, e))?;
        let report = apply_labels(&mut ex.vectors, &truth);
        println!("labels: {} matched, {} unmatched", report.matched, report.unmatched);
    }
    write_feature_csv(&ex.vectors, &a.out)?;
    println!("{} flows written to {}", ex.vectors.len(), a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<(), IdsError> {
    let data = load_dataset(&a.features, &a.truth, a.benign_run)?;
    let cfg = TrainConfig {
        method: a.method,
        rounds: a.rounds,
        local: LocalConfig { epochs: a.epochs, batch_size: a.batch_size, learning_rate: a.lr, mu: a.mu },
        server: ServerHyper { eta: a.eta, ..ServerHyper::default() },
        holdout_fraction: a.holdout,
        seed: a.seed,
    };
    let out = train(&data, &cfg)?;
    out.model.save(&a.out)?;
    if let Some(h) = &a.history {
        let json = serde_json::to_string_pretty(&out.history).map_err(|e| input_err(h, e))?;
        std::fs::write(h, json + "\n").map_err(|e| input_err(h, e))?;
    }
    println!("{} training rows, {} holdout rows", out.train_rows, out.holdout_rows);
    print!("{}", results_table(&[(a.method.to_string(), out.final_metrics().clone())]));
    Ok(())
}

fn open_sink(a: &DetectArgs) -> Result<Option<SyslogSink>, IdsError> {
    let cfg = match (&a.syslog_file, &a.syslog_udp) {
        (Some(p), _) => SinkConfig::File(p.clone()),
        (None, Some(u)) => SinkConfig::Udp(u.clone()),
        (None, None) => return Ok(None),
    };
    SyslogSink::open(&cfg, &a.hostname).map(Some).map_err(|e| IdsError::Input(format!("syslog sink: {e}")))
}

fn run_detect(a: DetectArgs) -> Result<(), IdsError> {
    let model = ModelFile::load(&a.model)?;
    let sink = open_sink(&a)?;
    if let Some(dir) = &a.watch {
        std::fs::create_dir_all(&a.audit).map_err(|e| input_err(&a.audit, e))?;
        let mut w = Watcher::new(dir.clone(), a.audit.clone(), &model, sink.as_ref());
        if a.once {
            let done = w.poll(false)?;
            println!("{} captures processed", done.len());
            return Ok(());
        }
        return w.run(Duration::from_secs_f64(a.poll_secs.max(0.05)));
    }
    if a.pcap.len() == 1 && !a.audit.is_dir() {
        let d = detect_file(&a.pcap[0], &model, &a.audit, sink.as_ref())?;
        println!("{} flows, {} events", d.verdicts.len(), d.events.len());
        return Ok(());
    }
    std::fs::create_dir_all(&a.audit).map_err(|e| input_err(&a.audit, e))?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut failed = None;
    for (path, result) in detect_many(&a.pcap, &model, &a.audit, sink.as_ref(), workers) {
        match result {
            Ok(d) => println!(
                "{}: {} flows, {} events -> {}",
                path.display(),
                d.verdicts.len(),
                d.events.len(),
                audit_path_in(&a.audit, &path).display()
            ),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failed = Some(e);
            }
        }
    }
    failed.map_or(Ok(()), Err)
}

fn run_evaluate(a: EvaluateArgs) -> Result<(), IdsError> {
    if a.truth.len() != 1 && a.truth.len() != a.pred.len() {
        return Err(IdsError::Input(format!("{} prediction files but {} truth files", a.pred.len(), a.truth.len())));
    }
    let truths: Vec<Vec<TruthRecord>> =
        a.truth.iter().map(|t| read_truth(t).map_err(|e| input_err(t, e))).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (i, p) in a.pred.iter().enumerate() {
        let truth = &truths[if truths.len() == 1 { 0 } else { i }];
        let scored = score_predictions(p, truth)?;
        let name = a
            .name
            .get(i)
            .cloned()
            .unwrap_or_else(|| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into()));
        rows.push((name, scored.metrics));
    }
    print!("{}", results_table(&rows));
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns 0 on success, 1 on usage errors and 2 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = write!(std::io::stderr(), "{}", e.render());
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Extract(a) => run_extract(a),
        Command::Train(a) => run_train(a),
        Command::Detect(a) => run_detect(a),
        Command::Evaluate(a) => run_evaluate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
