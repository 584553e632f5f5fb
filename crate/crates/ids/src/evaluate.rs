//! Scoring audit CSVs against ground truth and the results table.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use flowguard_core::csv_io::read_feature_csv_from;
use flowguard_core::truth::{TruthIndex, TruthRecord};
use flowguard_core::TrafficClass;
use flowguard_fl::{evaluate, Metrics};

use crate::IdsError;

#[derive(Debug, Clone)]
pub struct Scored {
    pub metrics: Metrics,
    pub matched: usize,
    pub unmatched: usize,
}

/// Pairs every prediction with its truth label; rows without truth are
/// counted and skipped.
pub fn score_predictions(pred_csv: &Path, truth: &[TruthRecord]) -> Result<Scored, IdsError> {
    let f = File::open(pred_csv).map_err(|e| IdsError::Input(format!("{}: {e}", pred_csv.display())))?;
    let (extra, rows) = read_feature_csv_from(BufReader::new(f))?;
    let col = extra
        .iter()
        .position(|c| c == "predicted_label")
        .ok_or_else(|| IdsError::Input(format!("{}: no predicted_label column", pred_csv.display())))?;
    let index = TruthIndex::new(truth);
    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    let mut unmatched = 0;
    for row in &rows {
        let p: TrafficClass = row.extra[col].parse().map_err(IdsError::Input)?;
        match index.lookup(&row.features) {
            Some(m) => {
                predicted.push(p.index());
                actual.push(m.label.index());
            }
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        log::warn!("{}: {unmatched} flows without ground truth were skipped", pred_csv.display());
    }
    let metrics = evaluate(TrafficClass::COUNT, &predicted, &actual)?;
    Ok(Scored { metrics, matched: predicted.len(), unmatched })
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Method × Accuracy/TPR/FPR/F1, one row per entry.
pub fn results_table(rows: &[(String, Metrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}", "Method", "Accuracy", "TPR", "FPR", "F1");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            name,
            pct(m.accuracy),
            pct(m.tpr),
            pct(m.fpr),
            pct(m.f1)
        );
    }
    out
}
