//! The full attack as files on disk: simulate a protected round, harvest
//! surrogate gradients, train the denoiser, denoise, invert and score.

use pgla::harness::{pipeline, ExperimentConfig, Run};

pub fn run_example() -> pgla::Result<()> {
    let dir = tempfile::tempdir()?;
    let config = ExperimentConfig::from_json(
        r#"{
            "seed": 3,
            "model": {
                "input_shape": [1, 4, 4],
                "layers": [
                    {"kind": "dense", "fan_in": 16, "fan_out": 6, "bias": true},
                    {"kind": "activation", "function": "sigmoid"},
                    {"kind": "dense", "fan_in": 6, "fan_out": 3, "bias": true}
                ],
                "classes": 3
            },
            "perturbation": {"mechanism": "gaussian_dp", "epsilon": 1.0, "delta": 1e-5, "min_dataset_size": 100},
            "probe": {"count": 64},
            "diffusion": {"train": {"steps": 200, "batch_size": 16, "predictor": {"hidden": 32, "blocks": 1, "time_dim": 8}}},
            "inversion": {"iterations": 50},
            "attack": {"trials": 4}
        }"#,
    )?;
    let run = Run::new(config, Some(dir.path().to_path_buf()), false)?;
    let reports = pipeline(&run)?;
    println!("digest {}", run.digest_hex());
    for r in &reports {
        println!(
            "trial {} T'={:?} cos shared {:.3} -> recovered {:.3}, psnr_i {:.1} -> {:.1} dB",
            r.trial,
            r.t_prime,
            r.cos_g_shared.unwrap_or(f64::NAN),
            r.cos_g.unwrap_or(f64::NAN),
            r.psnr_i_shared.unwrap_or(f64::NAN),
            r.psnr_i.unwrap_or(f64::NAN),
        );
    }
    assert_eq!(reports.len(), 4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
