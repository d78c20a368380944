//! Training a gradient denoiser on surrogate gradients and using it to strip
//! Gaussian noise from a gradient it has never seen.

use pgla::attack::{harvest_surrogate_gradients, known_noise_level, run_pgla, training_grids};
use pgla::autodiff::{build_model, synthetic_dataset, Activation, ModelSpec};
use pgla::diffusion::{train, NoiseSchedule, PredictorConfig, TrainConfig};
use pgla::numeric::{cosine_similarity_slices, sample_gaussian, RngState};
use pgla::shape::{GradientRole, GradientVector, GridRule};

pub fn run_example() -> pgla::Result<()> {
    let spec = ModelSpec::mlp(vec![1, 4, 4], &[6], 3, Activation::Sigmoid);
    let model = build_model(&spec, &mut RngState::new(1))?;
    let probes = synthetic_dataset(2, &[1, 4, 4], 3, 128)?;
    let grads = harvest_surrogate_gradients(&model, &probes)?;
    let grids = training_grids(&grads, GridRule::Strict);
    println!("{} training grids of side {}", grids.len(), grids[0].side());

    let sched = NoiseSchedule::standard();
    let cfg = TrainConfig {
        steps: 600,
        batch_size: 16,
        predictor: PredictorConfig {
            hidden: 32,
            blocks: 1,
            time_dim: 8,
        },
        ..TrainConfig::default()
    };
    let out = train(&grids, None, &sched, &cfg, &RngState::new(3))?;
    let trace = &out.loss_trace;
    println!("loss {:.3} -> {:.3}", trace[0], trace[trace.len() - 1]);

    let victim = synthetic_dataset(9, &[1, 4, 4], 3, 1)?;
    let (x, y) = &victim.samples()[0];
    let (_, clean) = model.loss_and_grad_params(x, *y)?;
    let std = 0.5 * clean.norm() / (clean.len() as f64).sqrt();
    let noise = sample_gaussian(&mut RngState::new(4), std, clean.len())?;
    let noisy: Vec<f32> = clean.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect();
    let shared = GradientVector::from_vec(noisy, clean.layout().clone(), GradientRole::Perturbed)?;

    let level = known_noise_level(&shared, std);
    let rec = run_pgla(&shared, &out.predictor, level, &sched, &mut RngState::new(5))?;
    let before = cosine_similarity_slices(clean.data(), shared.data())?.value;
    let after = cosine_similarity_slices(clean.data(), rec.gradient.data())?.value;
    println!(
        "M {:.3}, T' {}: cos {before:.3} -> {after:.3}",
        rec.provenance.m.unwrap_or(f64::NAN),
        rec.provenance.t_prime
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
