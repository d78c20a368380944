//! Federated-learning gradient privacy testbed.
//!
//! The crate simulates clients that share clipped, noise-protected
//! gradients, trains a diffusion model that strips that noise from
//! intercepted gradients, and runs gradient-inversion attacks on the
//! result to measure how much private data leaks.
//!
//! Modules, bottom up:
//!
//! * [`numeric`]: tensors, a counter-based RNG, noise samplers and metrics.
//! * [`autodiff`]: a define-by-run graph with second-order differentiation
//!   and the dense/convolutional classifier family.
//! * [`shape`]: layer layouts and the square-grid gradient adjustment.
//! * [`perturb`]: clipping, DP noise calibration, accounting and client rounds.
//! * [`diffusion`]: noise schedule, predictor training, noise-level-adaptive
//!   reverse sampling and denoising.
//! * [`attack`]: structure inference, surrogate harvesting, inversion and
//!   evaluation.
//! * [`harness`]: configuration, file formats and the staged pipeline.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod attack;
pub mod autodiff;
mod binio;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod perturb;
pub mod shape;

pub use error::{Error, Result};
