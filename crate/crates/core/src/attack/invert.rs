//! Gradient-matching inversion of a shared gradient into an image and label.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, ModelInstance};
use crate::error::{Error, Result};
use crate::numeric::{fill_gaussian, FlatTensor, RngState};
use crate::shape::GradientVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub iterations: usize,
    /// Adam step size for the dummy image.
    pub step: f64,
    /// Adam step size for the dummy label logits.
    pub label_step: f64,
    /// Restarts with halved step sizes after a non-finite loss.
    pub max_restarts: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            step: 0.1,
            label_step: 1.0,
            max_restarts: 3,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("inversion needs at least one iteration".into()));
        }
        for (v, what) in [(self.step, "step"), (self.label_step, "label_step")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{what} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    /// Lowest-loss dummy image.
    pub image: FlatTensor,
    /// Lowest-loss dummy label logits.
    pub label_logits: Vec<f32>,
    /// `argmax` of `label_logits`.
    pub label: usize,
    pub best_loss: f64,
    /// Match loss at every evaluated iterate of the final attempt.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`: the loss at accepted iterates.
    pub trace: Vec<f64>,
    pub initial_image: FlatTensor,
    pub initial_label_logits: Vec<f32>,
    pub restarts: usize,
}

/// Draws the dummy start: image pixels `U(0, 1)`, label logits `N(0, 1)`.
pub fn dummy_init(model: &ModelInstance, rng: &mut RngState) -> Result<(FlatTensor, Vec<f32>)> {
    let spec = model.spec();
    let n = spec.input_len();
    let x: Vec<f32> = (0..n).map(|_| rng.next_f64() as f32).collect();
    let mut y = vec![0.0f32; spec.classes];
    fill_gaussian(rng, 1.0, &mut y);
    Ok((FlatTensor::new(spec.input_shape.clone(), x)?, y))
}

/// Minimizes `||grad_W l(F(x), softmax(y)) - target||^2` over `(x, y)` from
/// a random start.
pub fn invert_gradients(
    target: &GradientVector,
    model: &ModelInstance,
    cfg: &InversionConfig,
    rng: &mut RngState,
) -> Result<Inversion> {
    let (x, y) = dummy_init(model, rng)?;
    invert_from(target, model, cfg, x, y)
}

/// [`invert_gradients`] from a caller-chosen start.
///
/// Each iteration evaluates the loss at the current iterate, keeps it if it
/// is the lowest so far, then takes one Adam step on the image and one on
/// the label logits. A non-finite loss restarts from the initial point with
/// both step sizes halved.
pub fn invert_from(
    target: &GradientVector,
    model: &ModelInstance,
    cfg: &InversionConfig,
    x0: FlatTensor,
    y0: Vec<f32>,
) -> Result<Inversion> {
    cfg.validate()?;
    let mut scale = 1.0;
    for restart in 0..=cfg.max_restarts {
        match attempt(target, model, cfg, scale, &x0, &y0)? {
            Some(mut inv) => {
                inv.restarts = restart;
                return Ok(inv);
            }
            None => {
                log::warn!("inversion diverged; restarting with step scale {}", scale / 2.0);
                scale /= 2.0;
            }
        }
    }
    Err(Error::Divergence(format!(
        "inversion loss became non-finite after {} restarts",
        cfg.max_restarts
    )))
}

fn attempt(
    target: &GradientVector,
    model: &ModelInstance,
    cfg: &InversionConfig,
    scale: f64,
    x0: &FlatTensor,
    y0: &[f32],
) -> Result<Option<Inversion>> {
    let mut x = x0.data().to_vec();
    let mut y = y0.to_vec();
    let mut ax = Adam::new(x.len(), cfg.step * scale);
    let mut ay = Adam::new(y.len(), cfg.label_step * scale);
    let mut best: Option<(f64, Vec<f32>, Vec<f32>)> = None;
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let xt = FlatTensor::from_parts_unchecked(x0.shape().to_vec(), x.clone());
        let r = match model.grad_match_loss_and_input_grad(&xt, &y, target) {
            Ok(r) => r,
            Err(Error::Divergence(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !r.loss.is_finite() || r.dy.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        losses.push(r.loss);
        if best.as_ref().map_or(true, |b| r.loss < b.0) {
            best = Some((r.loss, x.clone(), y.clone()));
        }
        trace.push(best.as_ref().map(|b| b.0).unwrap_or(r.loss));
        ax.step(&mut x, r.dx.data());
        ay.step(&mut y, &r.dy);
    }
    let (best_loss, bx, by) = best.expect("at least one iteration");
    Ok(Some(Inversion {
        image: FlatTensor::new(x0.shape().to_vec(), bx)?,
        label: argmax(&by),
        label_logits: by,
        best_loss,
        losses,
        trace,
        initial_image: x0.clone(),
        initial_label_logits: y0.to_vec(),
        restarts: 0,
    }))
}

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
