//! Attack evaluation and per-trial reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    cosine_similarity_slices, gradient_peak, label_accuracy, psnr_slices, FlatTensor,
};
use crate::shape::GradientVector;

/// Ground truth and candidates for one evaluation. A metric is computed
/// only when both of its inputs are present.
#[derive(Debug, Clone, Copy, Default)]
pub struct Evaluation<'a> {
    pub clean: Option<&'a GradientVector>,
    pub candidate: Option<&'a GradientVector>,
    /// `(truth, reconstruction)` images with pixels in `[0, 1]`.
    pub images: Option<(&'a FlatTensor, &'a FlatTensor)>,
    /// `(truth, predicted)` labels.
    pub labels: Option<(&'a [usize], &'a [usize])>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Cosine similarity between candidate and clean gradients.
    pub cos_g: Option<f64>,
    /// Gradient PSNR in dB, peak = range of the clean gradient.
    pub psnr_g: Option<f64>,
    /// Image PSNR in dB, peak 1, reconstruction clamped to `[0, 1]`.
    pub psnr_i: Option<f64>,
    /// Label recovery accuracy.
    pub lra: Option<f64>,
}

/// Undefined metrics (zero-norm or constant references) come back as `None`.
pub fn evaluate(e: &Evaluation) -> Result<Metrics> {
    let mut m = Metrics::default();
    if let (Some(c), Some(g)) = (e.clean, e.candidate) {
        if !c.layout().same_shapes(g.layout()) {
            return Err(Error::Layout("candidate and clean layouts differ".into()));
        }
        m.cos_g = defined(cosine_similarity_slices(c.data(), g.data()))?;
        m.psnr_g = match gradient_peak(c.data()) {
            Ok(peak) => Some(psnr_slices(c.data(), g.data(), peak)?.value),
            Err(Error::UndefinedMetric(msg)) => {
                log::warn!("{msg}");
                None
            }
            Err(e) => return Err(e),
        };
    }
    if let Some((truth, rec)) = e.images {
        let clamped: Vec<f32> = rec.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        m.psnr_i = Some(psnr_slices(truth.data(), &clamped, 1.0)?.value);
    }
    if let Some((truth, pred)) = e.labels {
        m.lra = Some(label_accuracy(pred, truth)?.value);
    }
    Ok(m)
}

fn defined(r: Result<crate::numeric::MetricValue>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v.value)),
        Err(Error::UndefinedMetric(msg)) => {
            log::warn!("{msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// One attack trial. `*_shared` columns measure the intercepted gradient
/// before denoising; the others measure the recovered one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub trial: u64,
    pub seed: u64,
    pub config_digest: String,
    pub m: Option<f64>,
    pub t_prime: Option<usize>,
    pub cos_g_shared: Option<f64>,
    pub psnr_g_shared: Option<f64>,
    pub psnr_i_shared: Option<f64>,
    pub lra_shared: Option<f64>,
    pub cos_g: Option<f64>,
    pub psnr_g: Option<f64>,
    pub psnr_i: Option<f64>,
    pub lra: Option<f64>,
}

impl AttackReport {
    pub fn new(trial: u64, seed: u64, config_digest: impl Into<String>) -> Self {
        Self {
            trial,
            seed,
            config_digest: config_digest.into(),
            m: None,
            t_prime: None,
            cos_g_shared: None,
            psnr_g_shared: None,
            psnr_i_shared: None,
            lra_shared: None,
            cos_g: None,
            psnr_g: None,
            psnr_i: None,
            lra: None,
        }
    }

    pub fn with_shared(mut self, m: Metrics) -> Self {
        self.cos_g_shared = m.cos_g;
        self.psnr_g_shared = m.psnr_g;
        self.psnr_i_shared = m.psnr_i;
        self.lra_shared = m.lra;
        self
    }

    pub fn with_recovered(mut self, m: Metrics) -> Self {
        self.cos_g = m.cos_g;
        self.psnr_g = m.psnr_g;
        self.psnr_i = m.psnr_i;
        self.lra = m.lra;
        self
    }
}

/// Mean and sample standard deviation of the present values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(values: impl IntoIterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        count: v.len(),
        mean,
        std,
    })
}
