//! Weighted binary cross entropy, confidence-accuracy and classification metrics, and a small
//! logistic model used to check that the loss recovers target probabilities.

mod toy;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::ExampleRecord;

pub use toy::{featurize, ToyConfig, ToyModel, TrainOutcome};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logarithms.
pub const EPS: f64 = 1e-7;

/// Thresholds reported by [`evaluate`].
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.15, 0.10, 0.05, 0.01];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty batch")]
    Empty,
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("prediction ids do not match the dataset: missing {missing:?}, unknown {unknown:?}")]
    IdMismatch {
        missing: Vec<String>,
        unknown: Vec<String>,
    },
}

fn clamp(f: f64) -> f64 {
    if !(EPS..=1.0 - EPS).contains(&f) {
        log::debug!("clamping probability {f}");
    }
    f.clamp(EPS, 1.0 - EPS)
}

/// `-(w ln f + (1 - w) ln(1 - f))`, minimized at `f = w`.
pub fn wbce_loss(f: f64, w: f64) -> f64 {
    let f = clamp(f);
    -(w * f.ln() + (1.0 - w) * (1.0 - f).ln())
}

/// Derivative of [`wbce_loss`] with respect to `f`.
pub fn wbce_grad(f: f64, w: f64) -> f64 {
    let f = clamp(f);
    -w / f + (1.0 - w) / (1.0 - f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub predicted_prob: f64,
    pub target_weight: f64,
    pub target_label: bool,
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub predicted_prob: f64,
}

/// Mean weighted loss over the batch.
pub fn batch_risk(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = records
        .iter()
        .map(|r| wbce_loss(r.predicted_prob, r.target_weight))
        .sum();
    Ok(total / records.len() as f64)
}

/// Fraction of records with `|target - predicted| < k`.
pub fn ca_at_k(records: &[PredictionRecord], k: f64) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = records
        .iter()
        .filter(|r| (r.target_weight - r.predicted_prob).abs() < k)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Accuracy and F1 with True as the positive class; a prediction is True at `p >= 0.5`.
/// F1 is 1 when there are neither predicted nor actual positives.
pub fn accuracy_f1(records: &[PredictionRecord]) -> Result<(f64, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        let predicted = r.predicted_prob >= 0.5;
        match (predicted, r.target_label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        if predicted == r.target_label {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / records.len() as f64;
    let f1 = if tp + fp + fneg == 0 {
        log::info!("no positive predictions or targets; F1 reported as 1.0");
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    Ok((accuracy, f1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    /// Keyed `ca@0.15` and so on.
    #[serde(flatten)]
    pub ca_at_k: BTreeMap<String, f64>,
    pub count: usize,
}

pub fn ca_key(k: f64) -> String {
    format!("ca@{k:.2}")
}

pub fn report(
    records: &[PredictionRecord],
    thresholds: &[f64],
) -> Result<MetricsReport, MetricsError> {
    let (accuracy, f1) = accuracy_f1(records)?;
    let ca_at_k = thresholds
        .iter()
        .map(|&k| Ok((ca_key(k), ca_at_k(records, k)?)))
        .collect::<Result<_, MetricsError>>()?;
    Ok(MetricsReport {
        accuracy,
        f1,
        ca_at_k,
        count: records.len(),
    })
}

/// Pairs each dataset record with its prediction. Every id must appear on both sides.
pub fn join(
    dataset: &[ExampleRecord],
    predictions: &[Prediction],
) -> Result<Vec<PredictionRecord>, MetricsError> {
    let by_id: HashMap<&str, f64> = predictions
        .iter()
        .map(|p| (p.example_id.as_str(), p.predicted_prob))
        .collect();
    let mut missing = Vec::new();
    let mut joined = Vec::with_capacity(dataset.len());
    for r in dataset {
        match by_id.get(r.id.as_str()) {
            Some(&p) => joined.push(PredictionRecord {
                example_id: r.id.clone(),
                predicted_prob: p,
                target_weight: r.weight,
                target_label: r.label,
            }),
            None => missing.push(r.id.clone()),
        }
    }
    let known: std::collections::HashSet<&str> = dataset.iter().map(|r| r.id.as_str()).collect();
    let mut unknown: Vec<String> = predictions
        .iter()
        .filter(|p| !known.contains(p.example_id.as_str()))
        .map(|p| p.example_id.clone())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        missing.sort();
        unknown.sort();
        return Err(MetricsError::IdMismatch { missing, unknown });
    }
    Ok(joined)
}

/// Joins and scores at [`DEFAULT_THRESHOLDS`].
pub fn evaluate(
    dataset: &[ExampleRecord],
    predictions: &[Prediction],
) -> Result<MetricsReport, MetricsError> {
    report(&join(dataset, predictions)?, &DEFAULT_THRESHOLDS)
}
