use serde::{Deserialize, Serialize};

/// Per-column min-max scaling. Only the `(min, max)` vectors leave a
/// client, so the pooled scaler is built without sharing rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Self {
        let mut s = Scaler { min: vec![f64::INFINITY; width], max: vec![f64::NEG_INFINITY; width] };
        for row in rows {
            for (j, &v) in row.iter().enumerate().take(width) {
                s.min[j] = s.min[j].min(v);
                s.max[j] = s.max[j].max(v);
            }
        }
        s
    }

    /// Combines client statistics into the global scaler.
    pub fn pool(parts: &[Scaler]) -> Self {
        let width = parts.first().map_or(0, |p| p.min.len());
        let mut s = Scaler { min: vec![f64::INFINITY; width], max: vec![f64::NEG_INFINITY; width] };
        for p in parts {
            for j in 0..width {
                s.min[j] = s.min[j].min(p.min[j]);
                s.max[j] = s.max[j].max(p.max[j]);
            }
        }
        s
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// Maps training ranges onto `[0, 1]`; constant columns map to 0 and
    /// values outside the training range are clamped.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }
}
