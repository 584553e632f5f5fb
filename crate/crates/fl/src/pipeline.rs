//! Dataset in, trained model file out.

use serde::{Deserialize, Serialize};

use flowguard_core::TrafficClass;

use crate::aggregate::ServerHyper;
use crate::dataset::{stratified_split, Dataset};
use crate::metrics::Metrics;
use crate::model::{Layout, ModelParameters};
use crate::model_file::ModelFile;
use crate::rng::{derive, tag};
use crate::rounds::{run_rounds, Method, RoundConfig, RoundRecord};
use crate::scaler::Scaler;
use crate::train::{ClientData, LocalConfig};
use crate::FlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub rounds: usize,
    pub local: LocalConfig,
    pub server: ServerHyper,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::FedAvg,
            rounds: 30,
            local: LocalConfig::default(),
            server: ServerHyper::default(),
            holdout_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub history: Vec<RoundRecord>,
    pub train_rows: usize,
    pub holdout_rows: usize,
    /// Holdout metrics of the initial model when no rounds were run.
    pub initial: Metrics,
}

impl TrainOutcome {
    /// Holdout metrics after the last round.
    pub fn final_metrics(&self) -> &Metrics {
        self.history.last().map_or(&self.initial, |r| &r.metrics)
    }
}

fn client_data(id: usize, data: &Dataset, scaler: &Scaler) -> ClientData {
    ClientData {
        id,
        rows: data.rows.iter().map(|r| scaler.transform(r)).collect(),
        labels: data.labels.iter().map(|l| l.index()).collect(),
    }
}

/// Splits `dataset`, partitions the training part by hub (one client per
/// hub), fits the pooled scaler and runs the federated rounds.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, FlError> {
    if dataset.is_empty() {
        return Err(FlError::Config("empty dataset".into()));
    }
    let width = dataset.rows[0].len();
    let (train_idx, test_idx) = stratified_split(&dataset.labels, cfg.holdout_fraction, cfg.seed);
    let train_set = dataset.subset(&train_idx);
    let test_set = dataset.subset(&test_idx);
    if test_set.is_empty() {
        return Err(FlError::Config("holdout split is empty".into()));
    }

    let hubs = train_set.hub_ids();
    let parts: Vec<Dataset> = hubs
        .iter()
        .map(|&h| {
            let idx: Vec<usize> = (0..train_set.len()).filter(|&i| train_set.hubs[i] == h).collect();
            train_set.subset(&idx)
        })
        .collect();
    let local_stats: Vec<Scaler> = parts.iter().map(|p| Scaler::fit(p.rows.iter().map(Vec::as_slice), width)).collect();
    let scaler = Scaler::pool(&local_stats);
    let clients: Vec<ClientData> = hubs.iter().zip(&parts).map(|(&h, p)| client_data(h, p, &scaler)).collect();
    let holdout = client_data(usize::MAX, &test_set, &scaler);

    let layout = Layout::classifier(width, TrafficClass::COUNT);
    let init = ModelParameters::init(layout, &mut derive(cfg.seed, &[tag::INIT]));
    let initial = crate::metrics::evaluate(
        TrafficClass::COUNT,
        &crate::rounds::predict_all(&init, &holdout.rows)?,
        &holdout.labels,
    )?;
    let round_cfg = RoundConfig {
        method: cfg.method,
        rounds: cfg.rounds,
        local: cfg.local,
        server: cfg.server,
        seed: cfg.seed,
    };
    let out = run_rounds(init, &clients, &holdout, &round_cfg)?;
    Ok(TrainOutcome {
        model: ModelFile::new(cfg.method, cfg.rounds, cfg.seed, scaler, out.params),
        history: out.history,
        train_rows: train_set.len(),
        holdout_rows: test_set.len(),
        initial,
    })
}
