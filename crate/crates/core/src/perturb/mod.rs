//! Client-side protection of shared gradients: clipping, DP noise
//! calibration, simple-composition accounting and the round simulator.

mod accountant;
mod calibrate;
mod noise;
mod round;

pub use accountant::{compose, PrivacyAccountant};
pub use calibrate::{
    client_sigma, gaussian_constant, sensitivity, server_sigma, FlTopology, Mechanism, NoiseKind,
    PerturbationSpec,
};
pub use noise::{
    add_noise, clip_gradient, perturb, perturb_per_layer, random_layer_specs, LayerNoise,
};
pub use round::{simulate_round, Client, RoundOutput};

/// Noise scale in units of the clean gradient's spread: `M = sigma / s`.
pub fn normalized_scale(sigma: f64, clean_scale: f64) -> f64 {
    sigma / clean_scale.max(crate::shape::SCALE_FLOOR)
}
