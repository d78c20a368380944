//! The attack: infer the victim's structure from an intercepted gradient,
//! harvest surrogate gradients to train a denoiser, strip the protective
//! noise, then invert the recovered gradient into an image and label.

mod harvest;
mod invert;
mod report;
mod structure;

pub use harvest::{
    build_surrogate, condition_grids, harvest_surrogate_gradients, training_grids, SurrogateInit,
};
pub use invert::{argmax, dummy_init, invert_from, invert_gradients, Inversion, InversionConfig};
pub use report::{evaluate, summarize, AttackReport, Evaluation, Metrics, Summary};
pub use structure::{infer_structure, surrogate_spec};

use crate::diffusion::{denoise, m_from_noise_std, Denoised, NoiseLevel, NoiseModel, NoiseSchedule};
use crate::error::Result;
use crate::numeric::RngState;
use crate::shape::{adjust, GradientVector};

/// Known-level entry from the protection's per-coordinate noise standard
/// deviation, measured against the spread of the intercepted gradient.
pub fn known_noise_level(shared: &GradientVector, noise_std: f64) -> NoiseLevel {
    let observed = adjust(shared).normalized().scale();
    NoiseLevel::Known {
        m: m_from_noise_std(observed, noise_std),
    }
}

/// Denoises an intercepted gradient with a trained predictor.
pub fn run_pgla(
    shared: &GradientVector,
    predictor: &dyn NoiseModel,
    level: NoiseLevel,
    schedule: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<Denoised> {
    denoise(shared, predictor, level, schedule, rng)
}
