//! Deterministic numeric foundation: tensors, seeded randomness, noise
//! distributions and evaluation metrics.

mod dist;
pub mod metrics;
mod rng;
mod tensor;

pub use dist::{sample_gaussian, sample_laplace, sample_uniform};
pub(crate) use dist::{fill_gaussian, fill_laplace};
pub use metrics::{
    cosine_similarity, cosine_similarity_slices, gradient_peak, label_accuracy, mse, psnr,
    psnr_slices, MetricKind, MetricValue, PSNR_CAP_DB,
};
pub use rng::RngState;
pub use tensor::FlatTensor;
