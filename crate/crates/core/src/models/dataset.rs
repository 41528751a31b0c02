//! Dataset loading and synthetic surrogates.
//!
//! CSV format: header row, numeric feature columns, final column the label
//! (integer class index or real regression target). Features are standardized
//! to zero mean and unit variance per column on load; the synthetic generators
//! are seed-deterministic so tests need no network access.

use std::path::Path;

use crate::error::CoreError;
use crate::linalg::{Matrix, Vector};
use crate::rng::RngStream;

/// A fixed design matrix plus labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x p feature matrix (standardized).
    pub features: Matrix,
    /// Length-n labels: class index (stored as f64) or real target.
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn num_examples(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Number of distinct integer class labels; `None` when labels are not
    /// non-negative integers.
    pub fn num_classes(&self) -> Option<usize> {
        let mut max = 0usize;
        for &l in &self.labels {
            if l < 0.0 || l.fract() != 0.0 {
                return None;
            }
            max = max.max(l as usize);
        }
        Some(max + 1)
    }
}

fn standardize(features: &mut Matrix) {
    let n = features.nrows() as f64;
    for mut col in features.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.add_scalar_mut(-mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 {
            col /= std;
        }
    }
}

/// Loads a CSV dataset (header row, last column = label) and standardizes the
/// feature columns.
pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset, CoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| CoreError::Dataset(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Dataset(e.to_string()))?;
        if record.len() < 2 {
            return Err(CoreError::Dataset(format!(
                "row {}: need at least one feature and a label",
                line + 2
            )));
        }
        let mut vals = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CoreError::Dataset(format!(
                    "row {}, column {}: non-numeric value {:?}",
                    line + 2,
                    col + 1,
                    field
                ))
            })?;
            vals.push(v);
        }
        if let Some(first) = rows.first() {
            if vals.len() != first.len() + 1 {
                return Err(CoreError::Dataset(format!(
                    "row {}: expected {} columns, got {}",
                    line + 2,
                    first.len() + 1,
                    vals.len()
                )));
            }
        }
        labels.push(vals.pop().expect("checked len >= 2"));
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(CoreError::Dataset("dataset has no rows".into()));
    }
    let p = rows[0].len();
    let mut features = Matrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    standardize(&mut features);
    Ok(Dataset { features, labels })
}

/// Synthetic dataset families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// `classes` Gaussian blobs with centers `separation` apart (in units of
    /// the within-blob standard deviation), labeled by blob index.
    Blobs { classes: usize, separation: f64 },
    /// Linear regression targets `y = <w, x> / sqrt(p)` with standard normal
    /// features and a fixed random unit-ish weight vector.
    LinearRegression,
}

/// Seed-deterministic synthetic dataset with standardized features.
pub fn synth_dataset(kind: SynthKind, n: usize, p: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && p >= 1);
    let mut rng = RngStream::new(seed, 1_000_003);
    match kind {
        SynthKind::Blobs { classes, separation } => {
            assert!(classes >= 1);
            // blob centers on scaled coordinate axes (cycled when classes > p)
            let mut features = Matrix::zeros(n, p);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % classes;
                for j in 0..p {
                    let center = if j == c % p { separation } else { 0.0 };
                    features[(i, j)] = center + rng.standard_normal();
                }
                labels.push(c as f64);
            }
            standardize(&mut features);
            Dataset { features, labels }
        }
        SynthKind::LinearRegression => {
            let w = Vector::from_fn(p, |_, _| rng.standard_normal());
            let mut features = Matrix::zeros(n, p);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let x = Vector::from_fn(p, |_, _| rng.standard_normal());
                labels.push(x.dot(&w) / (p as f64).sqrt());
                features.set_row(i, &x.transpose());
            }
            standardize(&mut features);
            Dataset { features, labels }
        }
    }
}
