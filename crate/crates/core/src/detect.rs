//! Threshold calibration, classification, and evaluation.
//!
//! The anomaly threshold is the mean of the k (default 5) highest validation
//! reconstruction losses; a point is anomalous only when its loss lies
//! strictly above the threshold.

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scale::FeatureMatrix;
use crate::time::Timestamp;

/// Default number of highest validation losses to average.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold<F> {
    pub value: F,
    /// Losses averaged.
    pub k: usize,
    /// Validation size the calibration saw.
    pub source_count: usize,
}

/// Mean of the k largest validation losses (ties counted by multiplicity).
pub fn calibrate_threshold<F: Scalar>(val_losses: &[F], k: usize) -> Result<Threshold<F>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if val_losses.len() < k {
        return Err(Error::data(format!(
            "insufficient validation data: {} losses for k = {k}",
            val_losses.len()
        )));
    }
    if let Some(bad) = val_losses.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite validation loss {bad}")));
    }
    // selection without a full sort: keep the k largest in a small buffer
    let mut top: Vec<F> = Vec::with_capacity(k + 1);
    for &v in val_losses {
        let pos = top.partition_point(|&t| t > v);
        if pos < k {
            top.insert(pos, v);
            top.truncate(k);
        }
    }
    let mut sum = F::zero();
    for &v in &top {
        sum += v;
    }
    Ok(Threshold {
        value: sum / F::from_f64_lossy(k as f64),
        k,
        source_count: val_losses.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Normal,
    Anomalous,
}

impl Prediction {
    pub fn is_anomalous(self) -> bool {
        self == Prediction::Anomalous
    }
}

/// Strictly-above classification: a loss equal to the threshold is normal.
pub fn classify<F: Scalar>(losses: &[F], threshold: &Threshold<F>) -> Vec<Prediction> {
    losses
        .iter()
        .map(|&l| {
            if l > threshold.value {
                Prediction::Anomalous
            } else {
                Prediction::Normal
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// Counts outcomes with anomalous as the positive class.
pub fn confusion(predictions: &[Prediction], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::data(format!(
            "length mismatch: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (pred, label) in predictions.iter().zip(labels) {
        match (pred.is_anomalous(), label.is_anomalous()) {
            (true, true) => cm.true_pos += 1,
            (false, false) => cm.true_neg += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Metric names whose denominator was zero; such metrics report 0.
    pub undefined: Vec<String>,
}

/// The four evaluation formulas; zero denominators flag the metric and report
/// 0 instead of erroring.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::data("empty confusion matrix"));
    }
    let (tp, fp, fn_) = (cm.true_pos as f64, cm.false_pos as f64, cm.false_neg as f64);
    let mut undefined = Vec::new();

    let accuracy = (tp + cm.true_neg as f64) / total as f64;
    let precision = if cm.true_pos + cm.false_pos == 0 {
        undefined.push("precision".to_owned());
        0.0
    } else {
        tp / (tp + fp)
    };
    let recall = if cm.true_pos + cm.false_neg == 0 {
        undefined.push("recall".to_owned());
        0.0
    } else {
        tp / (tp + fn_)
    };
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".to_owned());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    })
}

pub const LOSS_PLOT_HEADER: &str = "timestamp,loss,label,threshold";
pub const RECONSTRUCTION_PLOT_HEADER: &str = "timestamp,feature,original,reconstructed";

/// Writes the loss-versus-threshold view: one row per test point with its
/// true label. Losses print at full round-trip precision.
pub fn write_loss_plot<F: Scalar>(
    mut sink: impl Write,
    timestamps: &[Timestamp],
    losses: &[F],
    labels: &[Label],
    threshold: &Threshold<F>,
) -> Result<()> {
    if timestamps.len() != losses.len() || losses.len() != labels.len() {
        return Err(Error::data(format!(
            "misaligned plot inputs: {} timestamps, {} losses, {} labels",
            timestamps.len(),
            losses.len(),
            labels.len()
        )));
    }
    sink.write_all(LOSS_PLOT_HEADER.as_bytes())?;
    sink.write_all(b"\n")?;
    for ((ts, loss), label) in timestamps.iter().zip(losses).zip(labels) {
        let label = if label.is_anomalous() {
            "anomalous"
        } else {
            "normal"
        };
        let line = format!("{},{},{},{}\n", ts.to_iso(), loss, label, threshold.value);
        sink.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Reads back the loss column of a loss plot file, bit-exact.
pub fn read_loss_plot(source: impl BufRead) -> Result<Vec<f64>> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("empty input: missing header"))??;
    if header.trim_end() != LOSS_PLOT_HEADER {
        return Err(Error::Ingest {
            row: 1,
            message: format!("expected header {LOSS_PLOT_HEADER:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Ingest {
                row,
                message: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        out.push(fields[1].parse().map_err(|_| Error::Ingest {
            row,
            message: format!("non-numeric loss {:?}", fields[1]),
        })?);
    }
    Ok(out)
}

/// Writes original-versus-reconstructed values in long form, one row per
/// (point, feature), for the reconstruction overlay view.
pub fn write_reconstruction_plot<F: Scalar>(
    mut sink: impl Write,
    originals: &FeatureMatrix<F>,
    reconstructions: &FeatureMatrix<F>,
    feature_names: &[&str],
) -> Result<()> {
    if originals.n_rows() != reconstructions.n_rows()
        || originals.n_cols() != reconstructions.n_cols()
        || originals.n_cols() != feature_names.len()
    {
        return Err(Error::data("misaligned reconstruction plot inputs"));
    }
    sink.write_all(RECONSTRUCTION_PLOT_HEADER.as_bytes())?;
    sink.write_all(b"\n")?;
    for ((ts, orig), recon) in originals
        .row_keys()
        .iter()
        .zip(originals.rows())
        .zip(reconstructions.rows())
    {
        for (j, name) in feature_names.iter().enumerate() {
            let line = format!("{},{},{},{}\n", ts.to_iso(), name, orig[j], recon[j]);
            sink.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectTiming {
    pub total_seconds: f64,
    pub per_point_seconds: f64,
}

/// Everything `timed_detect` produces for one labeled test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: Threshold<f64>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub losses: Vec<f64>,
    pub predictions: Vec<Prediction>,
    pub timing: DetectTiming,
}

/// Runs transform → reconstruction losses → classify → confusion → metrics on
/// a labeled dataset, recording wall time.
pub fn timed_detect(
    state: &crate::model::ModelState,
    dataset: &Dataset,
) -> Result<EvaluationReport> {
    let threshold = state
        .threshold
        .ok_or_else(|| Error::data("model not calibrated"))?;
    let labels: Vec<Label> = dataset
        .records()
        .iter()
        .map(|r| {
            r.label
                .clone()
                .ok_or_else(|| Error::data("dataset not labeled"))
        })
        .collect::<Result<_>>()?;
    if dataset.is_empty() {
        return Err(Error::data("empty dataset"));
    }

    let params = state.parameters()?;
    let started = Instant::now();
    let matrix = FeatureMatrix::<f64>::from_dataset(dataset);
    let normalized = crate::scale::transform(&state.scaler, &matrix);
    let losses = crate::train::reconstruction_losses(&params, &normalized)?;
    let predictions = classify(&losses, &threshold);
    let confusion = confusion(&predictions, &labels)?;
    let metrics = metrics(&confusion)?;
    let total_seconds = started.elapsed().as_secs_f64();

    Ok(EvaluationReport {
        threshold,
        confusion,
        metrics,
        losses,
        predictions,
        timing: DetectTiming {
            total_seconds,
            per_point_seconds: total_seconds / dataset.len() as f64,
        },
    })
}
