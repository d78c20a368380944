//! Checked-in gradient pair whose metrics were computed once by the
//! reference implementation and frozen.
//!
//! Regenerate with `cargo test -p pgla --test golden -- --ignored`.

use std::path::PathBuf;

use pgla::harness::{eval_files, read_json, write_json, GradientFile};
use pgla::numeric::{sample_gaussian, RngState};
use pgla::shape::{GradientRole, GradientVector, LayerLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct Expected {
    cos_g: f64,
    psnr_g: f64,
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

#[test]
#[ignore = "rewrites the frozen fixture"]
fn regenerate_golden_fixture() {
    let layout = LayerLayout::new([("dense0.weight", vec![6, 5]), ("dense0.bias", vec![6])]).unwrap();
    let n = layout.total_len();
    let mut rng = RngState::new(2024);
    let clean = sample_gaussian(&mut rng, 0.05, n).unwrap().into_data();
    let noise = sample_gaussian(&mut rng, 0.02, n).unwrap();
    let rec: Vec<f32> = clean.iter().zip(noise.data()).map(|(a, b)| a + b).collect();
    let digest = [0x5a; 32];
    let a = GradientVector::from_vec(clean, layout.clone(), GradientRole::Clean).unwrap();
    let b = GradientVector::from_vec(rec, layout, GradientRole::Recovered).unwrap();
    GradientFile::from_gradient(&a, 7, digest).write(&dir().join("clean.pgrd")).unwrap();
    GradientFile::from_gradient(&b, 7, digest).write(&dir().join("recovered.pgrd")).unwrap();

    let to64 = |g: &GradientVector| g.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
    let (x, y) = (to64(&a), to64(&b));
    let expected = Expected {
        cos_g: pgla_oracle::metrics::cosine(&x, &y),
        psnr_g: pgla_oracle::metrics::psnr(&x, &y, pgla_oracle::metrics::range(&x)),
    };
    write_json(&dir().join("expected.json"), &expected).unwrap();
}

#[test]
fn eval_reproduces_frozen_metrics() {
    let expected: Expected = read_json(&dir().join("expected.json")).unwrap();
    let m = eval_files(&dir().join("clean.pgrd"), &dir().join("recovered.pgrd"), false).unwrap();
    assert!((m.cos_g.unwrap() - expected.cos_g).abs() < 1e-9);
    assert!((m.psnr_g.unwrap() - expected.psnr_g).abs() < 1e-9);
}
