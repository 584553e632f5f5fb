//! Fully connected classifier with rectifier hidden layers and a softmax
//! output, stored as one flat parameter vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::FlError;

/// Layer widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub sizes: Vec<usize>,
}

impl Layout {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "layout needs at least two non-empty layers");
        Layout { sizes: sizes.to_vec() }
    }

    /// Input 47 → 64 → 32 → 5 classes.
    pub fn classifier(inputs: usize, classes: usize) -> Self {
        Layout::new(&[inputs, 64, 32, classes])
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    /// Weights of layer `l` are stored row-major (`out × in`), followed by
    /// its biases.
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut at = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let o = (at, n_in, n_out);
                at += n_out * n_in + n_out;
                o
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ModelParameters {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.param_count();
        ModelParameters { layout, values: vec![0.0; n] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layout: Layout, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(layout);
        for (at, n_in, n_out) in p.layout.offsets() {
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in &mut p.values[at..at + n_in * n_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn from_vec(layout: Layout, values: Vec<f64>) -> Result<Self, FlError> {
        if values.len() != layout.param_count() {
            return Err(FlError::Layout(format!(
                "{} values for a layout needing {}",
                values.len(),
                layout.param_count()
            )));
        }
        Ok(ModelParameters { layout, values })
    }

    pub fn check_same_layout(&self, other: &ModelParameters) -> Result<(), FlError> {
        if self.layout != other.layout || self.values.len() != other.values.len() {
            return Err(FlError::Layout(format!("{:?} vs {:?}", self.layout.sizes, other.layout.sizes)));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry is the softmax output.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let offsets = self.layout.offsets();
        let mut acts = Vec::with_capacity(offsets.len() + 1);
        acts.push(x.to_vec());
        for (l, &(at, n_in, n_out)) in offsets.iter().enumerate() {
            let input = &acts[l];
            let w = &self.values[at..at + n_in * n_out];
            let b = &self.values[at + n_in * n_out..at + n_in * n_out + n_out];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 == offsets.len() {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Class scores for one scaled feature row.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, FlError> {
        if x.len() != self.layout.inputs() {
            return Err(FlError::FeatureLength { expected: self.layout.inputs(), found: x.len() });
        }
        Ok(self.forward(x).pop().expect("output layer"))
    }

    /// Winning class (lowest index on ties) and all class scores.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), FlError> {
        let s = self.scores(x)?;
        Ok((argmax(&s), s))
    }

    /// Mean cross-entropy over `batch` plus `(mu/2)‖w − anchor‖²`, and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        xs: &[&[f64]],
        ys: &[usize],
        mu: f64,
        anchor: Option<&[f64]>,
    ) -> (f64, Vec<f64>) {
        assert_eq!(xs.len(), ys.len());
        let offsets = self.layout.offsets();
        let mut grad = vec![0.0; self.values.len()];
        let mut loss = 0.0;
        let scale = 1.0 / xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward(x);
            let out = acts.last().expect("output");
            loss -= out[y].max(f64::MIN_POSITIVE).ln() * scale;
            // dL/dz at the output of softmax + cross-entropy.
            let mut delta: Vec<f64> =
                out.iter().enumerate().map(|(k, p)| (p - if k == y { 1.0 } else { 0.0 }) * scale).collect();
            for l in (0..offsets.len()).rev() {
                let (at, n_in, n_out) = offsets[l];
                let input = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[at + o * n_in..at + (o + 1) * n_in];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    grad[at + n_in * n_out + o] += d;
                }
                if l == 0 {
                    break;
                }
                let w = &self.values[at..at + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]).for_each(|(p, wv)| *p += d * wv);
                    }
                }
                // Rectifier derivative: zero where the activation was clipped.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        if let Some(anchor) = anchor {
            if mu > 0.0 {
                let mut sq = 0.0;
                for ((g, w), a) in grad.iter_mut().zip(&self.values).zip(anchor) {
                    let d = w - a;
                    sq += d * d;
                    *g += mu * d;
                }
                loss += 0.5 * mu * sq;
            }
        }
        (loss, grad)
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
