//! Similarity and fidelity metrics. All accumulation happens in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::FlatTensor;

/// PSNR reported for a zero-error reconstruction.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Cosine,
    PsnrDb,
    Mse,
    Lra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
}

fn same_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "metric inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape("metric inputs are empty".into()));
    }
    Ok(())
}

pub fn cosine_similarity(a: &FlatTensor, b: &FlatTensor) -> Result<MetricValue> {
    cosine_similarity_slices(a.data(), b.data())
}

pub fn cosine_similarity_slices(a: &[f32], b: &[f32]) -> Result<MetricValue> {
    same_len(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedMetric(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    let value = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(MetricValue {
        kind: MetricKind::Cosine,
        value,
    })
}

pub fn mse_slices(reference: &[f32], test: &[f32]) -> Result<MetricValue> {
    same_len(reference, test)?;
    let sum: f64 = reference
        .iter()
        .zip(test)
        .map(|(&r, &t)| (f64::from(r) - f64::from(t)).powi(2))
        .sum();
    Ok(MetricValue {
        kind: MetricKind::Mse,
        value: sum / reference.len() as f64,
    })
}

pub fn mse(reference: &FlatTensor, test: &FlatTensor) -> Result<MetricValue> {
    mse_slices(reference.data(), test.data())
}

/// `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &FlatTensor, test: &FlatTensor, peak: f64) -> Result<MetricValue> {
    psnr_slices(reference.data(), test.data(), peak)
}

pub fn psnr_slices(reference: &[f32], test: &[f32], peak: f64) -> Result<MetricValue> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::Parameter(format!("psnr peak must be > 0, got {peak}")));
    }
    let err = mse_slices(reference, test)?.value;
    let value = if err == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / err).log10()).min(PSNR_CAP_DB)
    };
    Ok(MetricValue {
        kind: MetricKind::PsnrDb,
        value,
    })
}

/// Dynamic range `max - min` of a gradient, used as its PSNR peak.
pub fn gradient_peak(reference: &[f32]) -> Result<f64> {
    let (lo, hi) = reference
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = f64::from(hi) - f64::from(lo);
    if !(range > 0.0) {
        return Err(Error::UndefinedMetric(
            "gradient PSNR needs a reference with nonzero range".into(),
        ));
    }
    Ok(range)
}

/// Fraction of exactly matching labels.
pub fn label_accuracy(predicted: &[usize], truth: &[usize]) -> Result<MetricValue> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "label lists must be nonempty and equal length ({} vs {})",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(MetricValue {
        kind: MetricKind::Lra,
        value: hits as f64 / truth.len() as f64,
    })
}
