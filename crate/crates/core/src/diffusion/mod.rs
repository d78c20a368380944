//! Gradient diffusion model: schedule, forward process, posterior, predictor
//! training, noise-level-adaptive entry and reverse sampling.

mod checkpoint;
mod predictor;
mod sampler;
mod schedule;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use predictor::{
    noise_prediction_loss, time_embedding, train, DensePredictor, LossWeighting, NoiseModel,
    PredictorConfig, TrainConfig, TrainOutput,
};
pub use sampler::{
    adjust_for, denoise, entry_point, m_from_noise_std, resolve_entry, sample_reverse, Denoised,
    DenoiseProvenance, Entry, NoiseLevel,
};
pub use schedule::{
    make_schedule, map_m_to_tprime, posterior_coefficients, posterior_coefficients_raw,
    posterior_params, posterior_params_with, q_sample, q_step, start_for_gamma, NoiseSchedule,
    PosteriorCoefficients, PosteriorForm, PosteriorParams, StartStep,
};
