//! Synchronous federated rounds.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_adaptive, aggregate_fedavg, AdaptiveMethod, ServerHyper, ServerOptState};
use crate::metrics::{evaluate, Metrics};
use crate::model::ModelParameters;
use crate::rng::{derive, tag};
use crate::train::{local_train, ClientData, LocalConfig, ModelUpdate};
use crate::FlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    FedAvg,
    FedProx,
    FedAdam,
    FedAdagrad,
    FedYogi,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::FedAvg, Method::FedProx, Method::FedAdam, Method::FedAdagrad, Method::FedYogi];

    pub fn name(self) -> &'static str {
        match self {
            Method::FedAvg => "FedAvg",
            Method::FedProx => "FedProx",
            Method::FedAdam => "FedAdam",
            Method::FedAdagrad => "FedAdagrad",
            Method::FedYogi => "FedYogi",
        }
    }

    pub fn adaptive(self) -> Option<AdaptiveMethod> {
        match self {
            Method::FedAdam => Some(AdaptiveMethod::Adam),
            Method::FedAdagrad => Some(AdaptiveMethod::Adagrad),
            Method::FedYogi => Some(AdaptiveMethod::Yogi),
            Method::FedAvg | Method::FedProx => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}; expected fedavg, fedprox, fedadam, fedadagrad or fedyogi"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub method: Method,
    pub rounds: usize,
    pub local: LocalConfig,
    pub server: ServerHyper,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            method: Method::FedAvg,
            rounds: 30,
            local: LocalConfig::default(),
            server: ServerHyper::default(),
            seed: 0,
        }
    }
}

impl RoundConfig {
    /// Local settings actually sent to clients: only FedProx keeps a
    /// proximal term.
    pub fn client_config(&self) -> LocalConfig {
        match self.method {
            Method::FedProx => self.local,
            _ => LocalConfig { mu: 0.0, ..self.local },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub params: ModelParameters,
    pub history: Vec<RoundRecord>,
}

/// Runs every client on its own thread against the same snapshot and
/// waits for all of them.
fn train_clients(
    global: &ModelParameters,
    clients: &[ClientData],
    cfg: &LocalConfig,
    seed: u64,
) -> Result<Vec<ModelUpdate>, FlError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = clients.iter().map(|c| s.spawn(move || local_train(global, c, cfg, seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(FlError::ClientPanicked)))
            .collect()
    })
}

pub fn predict_all(params: &ModelParameters, rows: &[Vec<f64>]) -> Result<Vec<usize>, FlError> {
    rows.iter().map(|r| params.predict(r).map(|(label, _)| label)).collect()
}

/// Broadcast, local training, aggregation and holdout evaluation, `rounds`
/// times. A failed round is retried once before giving up.
pub fn run_rounds(
    init: ModelParameters,
    clients: &[ClientData],
    holdout: &ClientData,
    cfg: &RoundConfig,
) -> Result<RunOutput, FlError> {
    if let Some(c) = clients.iter().find(|c| c.is_empty()) {
        return Err(FlError::EmptyClient(c.id));
    }
    if clients.is_empty() {
        return Err(FlError::NoUpdates);
    }
    let local = cfg.client_config();
    let classes = init.layout.outputs();
    let mut params = init;
    let mut server = cfg.method.adaptive().map(|m| ServerOptState::new(m, params.values.len(), cfg.server));
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let round_seed = derive(cfg.seed, &[tag::ROUND, round as u64]).next_u64();
        let updates = match train_clients(&params, clients, &local, round_seed) {
            Ok(u) => u,
            Err(e) => {
                log::warn!("round {round} failed ({e}); retrying");
                train_clients(&params, clients, &local, round_seed)?
            }
        };
        params = match &mut server {
            None => aggregate_fedavg(&updates)?,
            Some(state) => {
                let (next, next_state) = aggregate_adaptive(state, &params, &updates)?;
                *state = next_state;
                next
            }
        };
        let predicted = predict_all(&params, &holdout.rows)?;
        let metrics = evaluate(classes, &predicted, &holdout.labels)?;
        log::info!(
            "{} round {round}: accuracy {:.4} fpr {:.4} f1 {:.4}",
            cfg.method,
            metrics.accuracy,
            metrics.fpr,
            metrics.f1
        );
        history.push(RoundRecord { round, metrics });
    }
    Ok(RunOutput { params, history })
}
