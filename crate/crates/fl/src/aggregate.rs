//! Server-side aggregation: sample-weighted averaging and the adaptive
//! server optimizers.

use serde::{Deserialize, Serialize};

use crate::model::ModelParameters;
use crate::train::ModelUpdate;
use crate::FlError;

/// Sample-count-weighted mean of the client parameter vectors.
pub fn aggregate_fedavg(updates: &[ModelUpdate]) -> Result<ModelParameters, FlError> {
    let first = updates.first().ok_or(FlError::NoUpdates)?;
    let mut total = 0.0;
    for u in updates {
        first.params.check_same_layout(&u.params)?;
        if u.sample_count == 0 {
            return Err(FlError::EmptyClient(u.client));
        }
        total += u.sample_count as f64;
    }
    // Normalised weights make the result independent of a common scale of
    // the counts; the order of the sum follows client id, not arrival.
    let mut sorted: Vec<&ModelUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client);
    let mut out = vec![0.0; first.params.values.len()];
    for u in sorted {
        let w = u.sample_count as f64 / total;
        out.iter_mut().zip(&u.params.values).for_each(|(o, v)| *o += w * v);
    }
    ModelParameters::from_vec(first.params.layout.clone(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptiveMethod {
    Adam,
    Adagrad,
    Yogi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerHyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for ServerHyper {
    fn default() -> Self {
        ServerHyper { eta: 0.01, beta1: 0.9, beta2: 0.99, tau: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerOptState {
    pub method: AdaptiveMethod,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub hyper: ServerHyper,
}

impl ServerOptState {
    pub fn new(method: AdaptiveMethod, len: usize, hyper: ServerHyper) -> Self {
        ServerOptState { method, m: vec![0.0; len], v: vec![0.0; len], hyper }
    }

    /// One server step with an explicit pseudo-gradient.
    pub fn step(&mut self, current: &[f64], delta: &[f64]) -> Result<Vec<f64>, FlError> {
        let ServerHyper { eta, beta1, beta2, tau } = self.hyper;
        if !(tau > 0.0) {
            return Err(FlError::Config(format!("tau must be positive, got {tau}")));
        }
        if current.len() != self.m.len() || delta.len() != self.m.len() {
            return Err(FlError::Layout(format!("optimizer state has {} entries, update {}", self.m.len(), delta.len())));
        }
        let mut next = Vec::with_capacity(current.len());
        for i in 0..current.len() {
            let d = delta[i];
            let d2 = d * d;
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * d;
            self.v[i] = match self.method {
                AdaptiveMethod::Adam => beta2 * self.v[i] + (1.0 - beta2) * d2,
                AdaptiveMethod::Adagrad => self.v[i] + d2,
                AdaptiveMethod::Yogi => self.v[i] - (1.0 - beta2) * d2 * sign(self.v[i] - d2),
            };
            next.push(current[i] + eta * self.m[i] / (self.v[i].sqrt() + tau));
        }
        Ok(next)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pseudo-gradient (weighted client mean minus current) fed to the server
/// optimizer.
pub fn aggregate_adaptive(
    state: &ServerOptState,
    current: &ModelParameters,
    updates: &[ModelUpdate],
) -> Result<(ModelParameters, ServerOptState), FlError> {
    let mean = aggregate_fedavg(updates)?;
    current.check_same_layout(&mean)?;
    let delta: Vec<f64> = mean.values.iter().zip(&current.values).map(|(a, c)| a - c).collect();
    let mut next_state = state.clone();
    let values = next_state.step(&current.values, &delta)?;
    Ok((ModelParameters::from_vec(current.layout.clone(), values)?, next_state))
}
