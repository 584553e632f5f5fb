//! Labelled training data built from feature CSVs and truth files.

use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::seq::SliceRandom;

use flowguard_core::csv_io::read_feature_csv;
use flowguard_core::features::MODEL_FEATURE_COUNT;
use flowguard_core::truth::{read_truth, TruthIndex, TruthRecord};
use flowguard_core::{FeatureVector, TrafficClass};

use crate::rng::{derive, tag};
use crate::FlError;

/// Flows whose share of truth matches falls below this are rejected.
pub const MIN_JOIN_RATE: f64 = 0.95;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub flow_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<TrafficClass>,
    pub hubs: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, fv: &FeatureVector, label: TrafficClass, hub: usize) {
        self.flow_ids.push(fv.flow_id.clone());
        self.rows.push(fv.values.to_vec());
        self.labels.push(label);
        self.hubs.push(hub);
    }

    pub fn extend(&mut self, other: Dataset) {
        self.flow_ids.extend(other.flow_ids);
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
        self.hubs.extend(other.hubs);
    }

    pub fn class_counts(&self) -> [usize; TrafficClass::COUNT] {
        let mut c = [0; TrafficClass::COUNT];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// Sorted distinct hub ids.
    pub fn hub_ids(&self) -> Vec<usize> {
        let mut h = self.hubs.clone();
        h.sort_unstable();
        h.dedup();
        h
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            flow_ids: idx.iter().map(|&i| self.flow_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            hubs: idx.iter().map(|&i| self.hubs[i]).collect(),
        }
    }
}

/// Labels extracted flows from the truth table.
///
/// Flows without a truth match are kept as normal only for `benign_run`
/// captures; otherwise they are dropped with a warning.
pub fn label_vectors(
    vectors: &[FeatureVector],
    truth: &[TruthRecord],
    benign_run: bool,
) -> Result<Dataset, FlError> {
    let index = TruthIndex::new(truth);
    let hub_of_ip: HashMap<Ipv4Addr, usize> = truth.iter().map(|r| (r.client_ip, r.hub)).collect();
    let mut data = Dataset::default();
    let mut unmatched = Vec::new();
    for fv in vectors {
        match index.lookup(fv) {
            Some(m) => data.push(fv, m.label, m.hub),
            None => unmatched.push(fv),
        }
    }
    let total = vectors.len();
    if total > 0 && (data.len() as f64) < MIN_JOIN_RATE * total as f64 {
        return Err(FlError::Join { matched: data.len(), total });
    }
    for fv in unmatched {
        if benign_run {
            let hub = hub_of_ip.get(&fv.src_ip).or_else(|| hub_of_ip.get(&fv.dst_ip)).copied().unwrap_or(0);
            data.push(fv, TrafficClass::Normal, hub);
        } else {
            log::warn!("flow {} has no ground truth; dropped", fv.flow_id);
        }
    }
    Ok(data)
}

/// Loads and labels each `(features, truth)` pair of files.
pub fn load_dataset(
    features: &[impl AsRef<Path>],
    truth: &[impl AsRef<Path>],
    benign_run: bool,
) -> Result<Dataset, FlError> {
    if features.len() != truth.len() {
        return Err(FlError::Config(format!(
            "{} feature files but {} truth files",
            features.len(),
            truth.len()
        )));
    }
    let mut data = Dataset::default();
    for (f, t) in features.iter().zip(truth) {
        let vectors = read_feature_csv(f).map_err(|e| FlError::Input(format!("{}: {e}", f.as_ref().display())))?;
        let records = read_truth(t).map_err(|e| FlError::Input(format!("{}: {e}", t.as_ref().display())))?;
        let part = label_vectors(&vectors, &records, benign_run).map_err(|e| match e {
            FlError::Join { matched, total } => {
                log::error!(
                    "{} vs {}: only {matched} of {total} flows matched ground truth",
                    f.as_ref().display(),
                    t.as_ref().display()
                );
                e
            }
            other => other,
        })?;
        data.extend(part);
    }
    debug_assert!(data.rows.iter().all(|r| r.len() == MODEL_FEATURE_COUNT));
    Ok(data)
}

/// Per-class shuffled split; returns `(train, holdout)` index lists in
/// ascending order.
pub fn stratified_split(labels: &[TrafficClass], holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<TrafficClass, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let mut rng = derive(seed, &[tag::SPLIT]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let mut n_test = (idx.len() as f64 * holdout_fraction).round() as usize;
        if idx.len() >= 2 {
            n_test = n_test.clamp(1, idx.len() - 1);
        }
        test.extend_from_slice(&idx[..n_test.min(idx.len())]);
        train.extend_from_slice(&idx[n_test.min(idx.len())..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<TrafficClass> =
            (0..100).map(|i| if i % 10 == 0 { TrafficClass::HeartbeatFlood } else { TrafficClass::Normal }).collect();
        let (train, test) = stratified_split(&labels, 0.3, 4);
        assert_eq!(train.len() + test.len(), 100);
        assert_eq!(test.iter().filter(|&&i| labels[i] == TrafficClass::HeartbeatFlood).count(), 3);
        assert_eq!(test.len(), 30);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(stratified_split(&labels, 0.3, 4), (train, test));
    }
}
