//! Feature CSV output/input.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::features::{FeatureVector, FEATURE_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
}

/// Sorts by `(flow_start_timestamp, flow_id)` so output is independent of
/// assembly order.
pub fn sort_vectors(vectors: &mut [FeatureVector]) {
    vectors.sort_by(|a, b| {
        (a.flow_start_timestamp, &a.flow_id).cmp(&(b.flow_start_timestamp, &b.flow_id))
    });
}

/// Writes the header and one row per flow, optionally followed by extra
/// columns per row.
pub fn write_feature_csv_to<W: Write>(
    writer: W,
    vectors: &[FeatureVector],
    extra_columns: &[&str],
    mut extra: impl FnMut(usize, &FeatureVector) -> Vec<String>,
) -> Result<(), csv::Error> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&vectors[a], &vectors[b]);
        (x.flow_start_timestamp, &x.flow_id).cmp(&(y.flow_start_timestamp, &y.flow_id))
    });
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend_from_slice(extra_columns);
    w.write_record(&header)?;
    for i in order {
        let mut row = vectors[i].to_record();
        row.extend(extra(i, &vectors[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_feature_csv(vectors: &[FeatureVector], path: impl AsRef<Path>) -> Result<(), CsvError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    write_feature_csv_to(BufWriter::new(file), vectors, &[], |_, _| Vec::new())?;
    Ok(())
}

/// A feature row plus any trailing columns beyond the 55-column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: FeatureVector,
    pub extra: Vec<String>,
}

pub fn read_feature_csv_from<R: Read>(reader: R) -> Result<(Vec<String>, Vec<FeatureRow>), CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < FEATURE_NAMES.len() || header.iter().zip(FEATURE_NAMES).any(|(h, n)| h != n) {
        return Err(CsvError::Header(header.join(",")));
    }
    let extra_names = header[FEATURE_NAMES.len()..].to_vec();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cells: Vec<&str> = rec.iter().collect();
        let features = FeatureVector::from_record(&cells).map_err(|message| CsvError::Row { line, message })?;
        let extra = cells[FEATURE_NAMES.len()..].iter().map(|s| s.to_string()).collect();
        rows.push(FeatureRow { features, extra });
    }
    Ok((extra_names, rows))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureVector>, CsvError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })?;
    let (_, rows) = read_feature_csv_from(io::BufReader::new(file))?;
    Ok(rows.into_iter().map(|r| r.features).collect())
}
