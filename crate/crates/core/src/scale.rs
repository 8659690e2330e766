//! Min-max normalization and train/validation splitting.
//!
//! Scaler parameters are fitted on training data only and reused verbatim for
//! test data; out-of-range test values are deliberately not clipped, so
//! anomalies stay extreme in model space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FEATURE_ORDER};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::time::Timestamp;

/// Row-major matrix of feature vectors with their source timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<F> {
    data: Vec<F>,
    cols: usize,
    row_keys: Vec<Timestamp>,
}

impl<F: Scalar> FeatureMatrix<F> {
    pub fn new(cols: usize) -> Self {
        FeatureMatrix {
            data: Vec::new(),
            cols,
            row_keys: Vec::new(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<F>>, row_keys: Vec<Timestamp>) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.len() != row_keys.len() {
            return Err(Error::data("row_keys length does not match row count"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in &rows {
            if row.len() != cols {
                return Err(Error::data("ragged rows in feature matrix"));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite feature component {bad}")));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            data,
            cols,
            row_keys,
        })
    }

    /// Extracts the five features of every record, in the fixed feature order.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let cols = FEATURE_ORDER.len();
        let mut data = Vec::with_capacity(dataset.len() * cols);
        let mut row_keys = Vec::with_capacity(dataset.len());
        for rec in dataset.records() {
            for value in rec.features() {
                data.push(F::from_f64_lossy(value));
            }
            row_keys.push(rec.timestamp);
        }
        FeatureMatrix {
            data,
            cols,
            row_keys,
        }
    }

    pub fn push_row(&mut self, key: Timestamp, row: &[F]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.row_keys.push(key);
    }

    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.row_keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn row_keys(&self) -> &[Timestamp] {
        &self.row_keys
    }

    fn select(&self, indices: &[usize]) -> Self {
        let mut out = FeatureMatrix::new(self.cols);
        for &i in indices {
            out.push_row(self.row_keys[i], self.row(i));
        }
        out
    }
}

/// Per-feature min/max fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<F> {
    pub min: Vec<F>,
    pub max: Vec<F>,
    /// True where max == min; such features transform to 0 and inverse back to
    /// the fitted constant.
    pub degenerate: Vec<bool>,
}

/// Scans the training matrix for per-feature extrema.
pub fn fit_minmax<F: Scalar>(train: &FeatureMatrix<F>) -> Result<ScalerParams<F>> {
    if train.is_empty() {
        return Err(Error::data("cannot fit scaler on an empty matrix"));
    }
    let cols = train.n_cols();
    let mut min = vec![F::infinity(); cols];
    let mut max = vec![F::neg_infinity(); cols];
    for row in train.rows() {
        for (j, &v) in row.iter().enumerate() {
            if v < min[j] {
                min[j] = v;
            }
            if v > max[j] {
                max[j] = v;
            }
        }
    }
    let degenerate = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    Ok(ScalerParams {
        min,
        max,
        degenerate,
    })
}

/// Maps each component through `(x - min) / (max - min)`. Degenerate features
/// map to 0. No clipping.
pub fn transform<F: Scalar>(params: &ScalerParams<F>, m: &FeatureMatrix<F>) -> FeatureMatrix<F> {
    let mut out = FeatureMatrix::new(m.n_cols());
    let mut buf = vec![F::zero(); m.n_cols()];
    for (key, row) in m.row_keys().iter().zip(m.rows()) {
        for (j, &v) in row.iter().enumerate() {
            buf[j] = if params.degenerate[j] {
                F::zero()
            } else {
                (v - params.min[j]) / (params.max[j] - params.min[j])
            };
        }
        out.push_row(*key, &buf);
    }
    out
}

/// Inverse of [`transform`]; degenerate features restore the fitted constant.
pub fn inverse_transform<F: Scalar>(
    params: &ScalerParams<F>,
    m: &FeatureMatrix<F>,
) -> FeatureMatrix<F> {
    let mut out = FeatureMatrix::new(m.n_cols());
    let mut buf = vec![F::zero(); m.n_cols()];
    for (key, row) in m.row_keys().iter().zip(m.rows()) {
        for (j, &v) in row.iter().enumerate() {
            buf[j] = if params.degenerate[j] {
                params.min[j]
            } else {
                v * (params.max[j] - params.min[j]) + params.min[j]
            };
        }
        out.push_row(*key, &buf);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Validation is the most recent suffix; order preserved.
    Chronological,
    /// Seed-deterministic permutation before the cut.
    Shuffled { seed: u64 },
}

/// Splits into (train, validation); train receives `floor(ratio * n)` rows,
/// with at least one row on each side.
pub fn split<F: Scalar>(
    normal: &FeatureMatrix<F>,
    ratio: f64,
    mode: SplitMode,
) -> Result<(FeatureMatrix<F>, FeatureMatrix<F>)> {
    let n = normal.n_rows();
    if n < 2 {
        return Err(Error::data("need at least 2 rows to split"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let train_n = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    if let SplitMode::Shuffled { seed } = mode {
        indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let train = normal.select(&indices[..train_n]);
    let validation = normal.select(&indices[train_n..]);
    Ok((train, validation))
}
