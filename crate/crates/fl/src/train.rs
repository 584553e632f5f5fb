//! Client-side local training.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::ModelParameters;
use crate::rng::derive;
use crate::FlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Proximal weight; zero gives plain FedAvg local training.
    pub mu: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig { epochs: 5, batch_size: 32, learning_rate: 0.05, mu: 0.01 }
    }
}

/// Scaled rows and class indices held by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub id: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl ClientData {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// What a client sends back after a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub client: usize,
    pub params: ModelParameters,
    pub sample_count: usize,
}

/// Mini-batch gradient descent from `global` for `cfg.epochs` epochs. The
/// batch order depends only on `seed`, so results do not depend on which
/// thread runs the client.
pub fn local_train(
    global: &ModelParameters,
    data: &ClientData,
    cfg: &LocalConfig,
    seed: u64,
) -> Result<ModelUpdate, FlError> {
    if data.is_empty() {
        return Err(FlError::EmptyClient(data.id));
    }
    let mut params = global.clone();
    let mut rng = derive(seed, &[data.id as u64]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| data.rows[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grad) = params.loss_and_grad(&xs, &ys, cfg.mu, Some(&global.values));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(FlError::NonFiniteLoss { client: data.id, epoch });
            }
            params.values.iter_mut().zip(&grad).for_each(|(w, g)| *w -= cfg.learning_rate * g);
        }
    }
    Ok(ModelUpdate { client: data.id, params, sample_count: data.len() })
}
