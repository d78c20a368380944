//! Every example must run to completion.

#[path = "../examples/dp_calibration.rs"]
mod dp_calibration;

#[path = "../examples/federated_round.rs"]
mod federated_round;

#[path = "../examples/gradient_grid.rs"]
mod gradient_grid;

#[path = "../examples/diffusion_schedule.rs"]
mod diffusion_schedule;

#[path = "../examples/second_order_autodiff.rs"]
mod second_order_autodiff;

#[path = "../examples/train_denoiser.rs"]
mod train_denoiser;

#[path = "../examples/gradient_inversion.rs"]
mod gradient_inversion;

#[path = "../examples/structure_inference.rs"]
mod structure_inference;

#[path = "../examples/idx_dataset.rs"]
mod idx_dataset;

#[path = "../examples/attack_metrics.rs"]
mod attack_metrics;

#[path = "../examples/staged_pipeline.rs"]
mod staged_pipeline;

#[test]
fn example_dp_calibration() {
    dp_calibration::run_example().unwrap();
}

#[test]
fn example_federated_round() {
    federated_round::run_example().unwrap();
}

#[test]
fn example_gradient_grid() {
    gradient_grid::run_example().unwrap();
}

#[test]
fn example_diffusion_schedule() {
    diffusion_schedule::run_example().unwrap();
}

#[test]
fn example_second_order_autodiff() {
    second_order_autodiff::run_example().unwrap();
}

#[test]
fn example_train_denoiser() {
    train_denoiser::run_example().unwrap();
}

#[test]
fn example_gradient_inversion() {
    gradient_inversion::run_example().unwrap();
}

#[test]
fn example_structure_inference() {
    structure_inference::run_example().unwrap();
}

#[test]
fn example_idx_dataset() {
    idx_dataset::run_example().unwrap();
}

#[test]
fn example_attack_metrics() {
    attack_metrics::run_example().unwrap();
}

#[test]
fn example_staged_pipeline() {
    staged_pipeline::run_example().unwrap();
}
