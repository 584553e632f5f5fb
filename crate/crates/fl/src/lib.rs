//! Federated training of the flow classifier: one client per hub, FedAvg,
//! FedProx and the adaptive server optimizers FedAdam, FedAdagrad and
//! FedYogi.

pub mod aggregate;
pub mod dataset;
pub mod metrics;
pub mod model;
pub mod model_file;
pub mod pipeline;
mod rng;
pub mod rounds;
pub mod scaler;
pub mod train;

pub use aggregate::{aggregate_adaptive, aggregate_fedavg, AdaptiveMethod, ServerHyper, ServerOptState};
pub use dataset::{load_dataset, Dataset};
pub use metrics::{binary_rates, evaluate, BinaryRates, Confusion, Metrics};
pub use model::{Layout, ModelParameters};
pub use model_file::ModelFile;
pub use pipeline::{train, TrainConfig, TrainOutcome};
pub use rounds::{run_rounds, Method, RoundConfig, RoundRecord, RunOutput};
pub use scaler::Scaler;
pub use train::{local_train, ClientData, LocalConfig, ModelUpdate};

#[derive(Debug, thiserror::Error)]
pub enum FlError {
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error("expected {expected} features, got {found}")]
    FeatureLength { expected: usize, found: usize },
    #[error("client {client}: loss became non-finite in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { client: usize, epoch: usize },
    #[error("client {0} has no training rows")]
    EmptyClient(usize),
    #[error("a client worker panicked")]
    ClientPanicked,
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("only {matched} of {total} flows matched ground truth (need 95%)")]
    Join { matched: usize, total: usize },
    #[error("model feature schema {model:?} does not match extractor schema {extractor:?}")]
    SchemaMismatch { model: String, extractor: String },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("{0}")]
    Input(String),
}
