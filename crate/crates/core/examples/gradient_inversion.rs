//! Reconstructing a training image and its label from the parameter gradient
//! it produced.

use pgla::attack::{evaluate, invert_gradients, Evaluation, InversionConfig};
use pgla::autodiff::{build_model, synthetic_dataset, Activation, ModelSpec};
use pgla::numeric::RngState;

pub fn run_example() -> pgla::Result<()> {
    let spec = ModelSpec::mlp(vec![1, 8, 8], &[12], 4, Activation::Sigmoid);
    let model = build_model(&spec, &mut RngState::new(11))?;
    let data = synthetic_dataset(12, &[1, 8, 8], 4, 1)?;
    let (x, y) = &data.samples()[0];
    let (_, target) = model.loss_and_grad_params(x, *y)?;

    let cfg = InversionConfig::default();
    let inv = invert_gradients(&target, &model, &cfg, &mut RngState::new(13))?;
    println!(
        "match loss {:.3e} -> {:.3e} in {} iterations, {} restarts",
        inv.trace[0],
        inv.best_loss,
        inv.trace.len(),
        inv.restarts
    );
    let start = evaluate(&Evaluation {
        images: Some((x, &inv.initial_image)),
        ..Evaluation::default()
    })?;
    let m = evaluate(&Evaluation {
        images: Some((x, &inv.image)),
        labels: Some((&[*y], &[inv.label])),
        ..Evaluation::default()
    })?;
    println!(
        "image PSNR {:.1} -> {:.1} dB, label {} (truth {y})",
        start.psnr_i.unwrap_or(f64::NAN),
        m.psnr_i.unwrap_or(f64::NAN),
        inv.label
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
