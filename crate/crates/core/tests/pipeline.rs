//! Staged pipeline behaviour on small configs.

mod common;

use std::fs;
use std::path::Path;

use pgla::attack::harvest_surrogate_gradients;
use pgla::autodiff::{build_model, ModelInstance, ProbeDataset, ProbeSource};
use pgla::harness::{
    eval_files, harvest, harvested, pipeline, run_stage, simulate, ExperimentConfig, FileRole,
    GradientFile, Run, Stage,
};
use pgla::numeric::{FlatTensor, RngState};
use pgla::Error;

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn no_noise_leaves_gradients_intact() {
    let mut c = common::tiny_config(4);
    c.perturbation = serde_json::from_str(
        r#"{"mechanism": "per_layer_random", "noise": "gaussian", "scale": 0.0}"#,
    )
    .unwrap();
    c.attack.invert = false;
    let dir = tempfile::tempdir().unwrap();
    let reports = pipeline(&Run::new(c, Some(dir.path().into()), false).unwrap()).unwrap();
    for r in reports {
        assert!((r.cos_g_shared.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.cos_g.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.t_prime, Some(0));
    }
}

#[test]
fn same_config_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        pipeline(&Run::new(common::tiny_config(8), Some(d.path().into()), false).unwrap()).unwrap();
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    let mut compared = 0;
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        if x.file_name().unwrap() == "run.json" {
            continue;
        }
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
        compared += 1;
    }
    assert!(compared > 10);
}

#[test]
fn every_artifact_carries_digest_and_seed() {
    let c = common::tiny_config(5);
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(c, Some(dir.path().into()), false).unwrap();
    pipeline(&run).unwrap();
    for p in files(dir.path()) {
        if p.extension().is_some_and(|e| e == "pgrd") {
            let f = GradientFile::read(&p).unwrap();
            assert_eq!((f.digest, f.seed), (run.digest(), 5), "{}", p.display());
        }
    }
    let csv = fs::read_to_string(run.path("eval", "report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(&run.digest_hex())));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn stages_refuse_foreign_artifacts_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let out = Some(dir.path().to_path_buf());
    simulate(&Run::new(common::tiny_config(1), out.clone(), false).unwrap()).unwrap();
    let mut other = common::tiny_config(1);
    other.attack.trials = 2;
    other.probe.count = 40;
    let run = Run::new(other.clone(), out.clone(), false).unwrap();
    assert!(matches!(harvest(&run), Err(Error::DigestMismatch(_))));
    let forced = Run::new(other, out, true).unwrap();
    for stage in [Stage::Harvest, Stage::TrainDiffusion, Stage::Denoise] {
        run_stage(&forced, stage).unwrap();
    }
}

#[test]
fn eval_refuses_mixed_digests() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = common::tiny_config(2);
    let a = Run::new(c.clone(), Some(dir.path().join("a")), false).unwrap();
    simulate(&a).unwrap();
    c.seed = 3;
    let b = Run::new(c, Some(dir.path().join("b")), false).unwrap();
    simulate(&b).unwrap();
    let (x, y) = (a.path("simulate", "clean-0000.pgrd"), b.path("simulate", "shared-0000.pgrd"));
    assert!(matches!(eval_files(&x, &y, false), Err(Error::DigestMismatch(_))));
    assert!(eval_files(&x, &y, true).unwrap().cos_g.is_some());
    let same = eval_files(&x, &a.path("simulate", "shared-0000.pgrd"), false).unwrap();
    assert!(same.cos_g.unwrap() < 1.0);
}

#[test]
fn missing_inputs_are_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(common::tiny_config(1), Some(dir.path().into()), false).unwrap();
    for stage in [Stage::TrainDiffusion, Stage::Denoise, Stage::Invert, Stage::Eval] {
        match run_stage(&run, stage) {
            Err(Error::MissingArtifact { path, .. }) => assert!(path.starts_with(dir.path())),
            other => panic!("{stage:?}: expected a missing artifact, got {other:?}"),
        }
    }
}

#[test]
fn harvest_file_matches_direct_harvest() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(common::tiny_config(6), Some(dir.path().into()), false).unwrap();
    simulate(&run).unwrap();
    assert_eq!(harvest(&run).unwrap(), 48);
    let h = harvested(&run).unwrap();
    assert_eq!(h.len(), 48);
    let f = GradientFile::read(&run.path("harvest", "harvest.pgrd")).unwrap();
    assert_eq!(f.layer("harvest").unwrap().0, &[48, h[0].len()]);
    assert_eq!(f.role, FileRole::Gradient(pgla::shape::GradientRole::Surrogate));
}

#[test]
fn single_probe_harvest() {
    let c = common::tiny_config(1);
    let model = build_model(&c.model, &mut RngState::new(1)).unwrap();
    let x = FlatTensor::new(vec![1, 4, 4], vec![0.5; 16]).unwrap();
    let probes = ProbeDataset::new(vec![(x.clone(), 2)], vec![1, 4, 4], 3, ProbeSource::Synthetic { seed: 0 }).unwrap();
    let g = harvest_surrogate_gradients(&model, &probes).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].data(), model.loss_and_grad_params(&x, 2).unwrap().1.data());
}

#[test]
fn zero_image_gives_zero_first_layer_weight_gradient() {
    let c: ExperimentConfig = common::tiny_config(1);
    let model: ModelInstance = build_model(&c.model, &mut RngState::new(3)).unwrap();
    let (_, g) = model.loss_and_grad_params(&FlatTensor::zeros(vec![1, 4, 4]), 1).unwrap();
    assert!(g.layer(0).iter().all(|&v| v == 0.0));
    assert!(g.layer(1).iter().any(|&v| v != 0.0));
}

#[test]
fn bad_config_fields_are_named() {
    let err = ExperimentConfig::from_json(r#"{"attack": {"trials": 0}}"#)
        .and_then(|c| c.validate())
        .unwrap_err();
    let Error::Config(fields) = err else { panic!("expected config error, got {err}") };
    assert!(fields.iter().any(|f| f.field.starts_with("attack")));
}
