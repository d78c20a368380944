//! Pipeline stages. Each stage reads its inputs from, and writes its
//! artifacts to, the run's output directory:
//!
//! ```text
//! simulate/  global.pgrd victims.pgrd clean-NNNN.pgrd shared-NNNN.pgrd privacy.json
//! harvest/   harvest.pgrd
//! diffusion/ predictor.pgdm loss.csv
//! denoise/   recovered-NNNN.pgrd provenance.csv
//! invert/    recovered-NNNN.pgrd shared-NNNN.pgrd inversions.csv
//! eval/      report.csv summary.json
//! ```
//!
//! Every binary artifact carries the seed and config digest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    build_surrogate, evaluate, harvest_surrogate_gradients, infer_structure,
    invert_gradients, known_noise_level, run_pgla, summarize, surrogate_spec, training_grids,
    AttackReport, Evaluation, Inversion, Metrics, Summary,
};
use crate::autodiff::{build_model, ModelInstance, ModelSpec};
use crate::diffusion::{
    decode_checkpoint, encode_checkpoint, train, Checkpoint, DenoiseProvenance, NoiseLevel,
};
use crate::error::{Error, Result};
use crate::harness::config::{digest_hex, load_source, ExperimentConfig};
use crate::harness::gradfile::{FileRole, GradientFile};
use crate::harness::io::{
    csv_bytes, read_artifact, read_csv, report_csv, write_atomic, write_json,
};
use crate::numeric::{FlatTensor, RngState};
use crate::perturb::{simulate_round, Client, PrivacyAccountant};
use crate::shape::{GradientRole, GradientVector, LayerLayout};

const MODEL_STREAM: u64 = 1;
const ROUND_STREAM: u64 = 2;
const SURROGATE_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;
const DENOISE_STREAM: u64 = 6;
const INVERT_STREAM: u64 = 7;

/// A validated config bound to an output directory.
#[derive(Debug, Clone)]
pub struct Run {
    config: ExperimentConfig,
    out: PathBuf,
    digest: [u8; 32],
    force: bool,
}

impl Run {
    /// `out` overrides `config.output_dir`. `force` lets stages read
    /// artifacts written under a different config digest.
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>, force: bool) -> Result<Self> {
        config.validate()?;
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        let digest = config.digest();
        Ok(Self {
            config,
            out,
            digest,
            force,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn digest_hex(&self) -> String {
        digest_hex(&self.digest)
    }

    pub fn path(&self, stage: &str, name: &str) -> PathBuf {
        self.out.join(stage).join(name)
    }

    fn trial_path(&self, stage: &str, kind: &str, t: usize) -> PathBuf {
        self.path(stage, &format!("{kind}-{t:04}.pgrd"))
    }

    fn rng(&self, tags: &[u64]) -> RngState {
        RngState::new(self.config.seed).derive(tags)
    }

    fn trials(&self) -> usize {
        self.config.attack.trials
    }

    fn write(&self, path: &Path, layout: LayerLayout, role: FileRole, payload: Vec<f32>) -> Result<()> {
        GradientFile::new(layout, role, self.config.seed, self.digest, payload)?.write(path)
    }

    fn write_gradient(&self, path: &Path, g: &GradientVector) -> Result<()> {
        GradientFile::from_gradient(g, self.config.seed, self.digest).write(path)
    }

    /// Reads an artifact and checks that it belongs to this run.
    fn read(&self, path: &Path) -> Result<GradientFile> {
        let f = GradientFile::read(path)?;
        if !self.force && (f.digest != self.digest || f.seed != self.config.seed) {
            return Err(Error::DigestMismatch(format!(
                "{} was written with digest {} seed {}, this run has {} seed {}",
                path.display(),
                digest_hex(&f.digest),
                f.seed,
                self.digest_hex(),
                self.config.seed
            )));
        }
        Ok(f)
    }

    fn read_gradient(&self, path: &Path) -> Result<GradientVector> {
        self.read(path)?.to_gradient()
    }

    /// Intercepted gradient of trial `t`.
    pub fn shared(&self, t: usize) -> Result<GradientVector> {
        self.read_gradient(&self.trial_path("simulate", "shared", t))
    }

    pub fn clean(&self, t: usize) -> Result<GradientVector> {
        self.read_gradient(&self.trial_path("simulate", "clean", t))
    }

    pub fn recovered(&self, t: usize) -> Result<GradientVector> {
        self.read_gradient(&self.trial_path("denoise", "recovered", t))
    }

    /// The global model broadcast in the attacked round.
    pub fn global_model(&self) -> Result<ModelInstance> {
        let f = self.read(&self.path("simulate", "global.pgrd"))?;
        if f.role != FileRole::Parameters {
            return Err(Error::Input("global.pgrd does not hold parameters".into()));
        }
        ModelInstance::from_params(&self.config.model, f.payload)
    }

    /// The classifier as the attacker sees it: the spec inferred from an
    /// intercepted gradient's layout, carrying the broadcast weights.
    pub fn attacker_model(&self) -> Result<ModelInstance> {
        let layout = infer_structure(&self.shared(0)?)?;
        let spec = self.surrogate_spec(&layout)?;
        let global = self.global_model()?;
        ModelInstance::from_params(&spec, global.params().data().to_vec())
    }

    fn surrogate_spec(&self, layout: &LayerLayout) -> Result<ModelSpec> {
        let s = &self.config.surrogate;
        let shape = s
            .input_shape
            .clone()
            .unwrap_or_else(|| self.config.model.input_shape.clone());
        surrogate_spec(layout, Some(shape), s.activation)
    }

    pub fn predictor(&self) -> Result<Checkpoint> {
        let path = self.path("diffusion", "predictor.pgdm");
        let c = decode_checkpoint(&read_artifact(&path)?)?;
        if !self.force && (c.digest != self.digest || c.seed != self.config.seed) {
            return Err(Error::DigestMismatch(format!(
                "{} belongs to a different config or seed",
                path.display()
            )));
        }
        Ok(c)
    }

    fn noise_level(&self, shared: &GradientVector) -> Result<NoiseLevel> {
        Ok(match self.config.denoise.level {
            Some(level) => level,
            None => known_noise_level(shared, self.config.perturbation.noise_std()?),
        })
    }
}

/// Noise calibration of the simulated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySummary {
    pub client_sigma: f64,
    pub server_sigma: f64,
    pub noise_std: f64,
    pub epsilon_total: f64,
    pub delta_total: f64,
}

/// One round with one victim per trial, each holding a single private
/// sample. Writes the broadcast model, the victims' samples, and each
/// victim's clean and shared gradients.
pub fn simulate(run: &Run) -> Result<PrivacySummary> {
    let cfg = &run.config;
    let n = run.trials();
    let global = build_model(&cfg.model, &mut run.rng(&[MODEL_STREAM]))?;
    let data = load_source(
        &cfg.data.source,
        &cfg.model.input_shape,
        cfg.model.classes,
        n,
        cfg.data.max_samples,
    )?;
    if data.len() < n {
        return Err(Error::Input(format!(
            "{} trials need {n} victim samples, the dataset has {}",
            n,
            data.len()
        )));
    }
    let clients: Vec<Client> = data
        .samples()
        .iter()
        .take(n)
        .enumerate()
        .map(|(t, s)| Client {
            id: t as u64,
            model: global.clone(),
            data: vec![s.clone()],
        })
        .collect();
    let mut acct = PrivacyAccountant::new();
    let round = simulate_round(
        &clients,
        &cfg.perturbation,
        &cfg.topology,
        0,
        &run.rng(&[ROUND_STREAM]),
        &mut acct,
        cfg.server_noise,
    )?;
    run.write(
        &run.path("simulate", "global.pgrd"),
        global.layout().clone(),
        FileRole::Parameters,
        global.params().data().to_vec(),
    )?;
    let mut images = Vec::with_capacity(n * cfg.model.input_len());
    let mut labels = Vec::with_capacity(n);
    for (x, y) in data.samples().iter().take(n) {
        images.extend_from_slice(x.data());
        labels.push(*y as f32);
    }
    let mut img_shape = vec![n];
    img_shape.extend_from_slice(&cfg.model.input_shape);
    images.extend(labels);
    run.write(
        &run.path("simulate", "victims.pgrd"),
        LayerLayout::new([("images", img_shape), ("labels", vec![n])])?,
        FileRole::Image,
        images,
    )?;
    for (t, (c, s)) in round.clean.iter().zip(&round.shared).enumerate() {
        run.write_gradient(&run.trial_path("simulate", "clean", t), c)?;
        run.write_gradient(&run.trial_path("simulate", "shared", t), s)?;
    }
    let (e, d) = acct.compose();
    let summary = PrivacySummary {
        client_sigma: round.client_sigma,
        server_sigma: round.server_sigma,
        noise_std: cfg.perturbation.noise_std()?,
        epsilon_total: e,
        delta_total: d,
    };
    write_json(&run.path("simulate", "privacy.json"), &summary)?;
    Ok(summary)
}

/// Victim samples written by [`simulate`].
pub fn victims(run: &Run) -> Result<Vec<(FlatTensor, usize)>> {
    let f = run.read(&run.path("simulate", "victims.pgrd"))?;
    let (shape, images) = f.layer("images")?;
    let (_, labels) = f.layer("labels")?;
    let per: usize = shape[1..].iter().product();
    images
        .chunks_exact(per)
        .zip(labels)
        .map(|(x, &y)| Ok((FlatTensor::new(shape[1..].to_vec(), x.to_vec())?, y as usize)))
        .collect()
}

/// Harvests surrogate gradients on the attacker's probe set. Consumes only
/// the intercepted gradient's layout and the broadcast model.
pub fn harvest(run: &Run) -> Result<usize> {
    let cfg = &run.config;
    let layout = infer_structure(&run.shared(0)?)?;
    let spec = run.surrogate_spec(&layout)?;
    let broadcast = match cfg.surrogate.init {
        crate::attack::SurrogateInit::Broadcast => Some(run.global_model()?),
        crate::attack::SurrogateInit::Fresh => None,
    };
    let surrogate = build_surrogate(
        &spec,
        &cfg.surrogate.init,
        broadcast.as_ref(),
        &mut run.rng(&[SURROGATE_STREAM]),
    )?;
    let probe = load_source(
        &cfg.probe.source,
        &spec.input_shape,
        spec.classes,
        cfg.probe.count,
        None,
    )?;
    let grads = harvest_surrogate_gradients(&surrogate, &probe)?;
    let l = layout.total_len();
    let mut payload = Vec::with_capacity(grads.len() * l);
    for g in &grads {
        payload.extend_from_slice(g.data());
    }
    run.write(
        &run.path("harvest", "harvest.pgrd"),
        LayerLayout::new([("harvest", vec![grads.len(), l])])?,
        FileRole::Gradient(GradientRole::Surrogate),
        payload,
    )?;
    Ok(grads.len())
}

/// Harvested gradients, split back into the intercepted layout.
pub fn harvested(run: &Run) -> Result<Vec<GradientVector>> {
    let layout = infer_structure(&run.shared(0)?)?;
    let f = run.read(&run.path("harvest", "harvest.pgrd"))?;
    let (shape, data) = f.layer("harvest")?;
    if shape.len() != 2 || shape[1] != layout.total_len() {
        return Err(Error::Layout(format!(
            "harvest rows have shape {shape:?}, the intercepted layout needs {}",
            layout.total_len()
        )));
    }
    data.chunks_exact(shape[1])
        .map(|c| GradientVector::from_vec(c.to_vec(), layout.clone(), GradientRole::Surrogate))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

/// Trains the gradient diffusion predictor on the harvest and writes a
/// checkpoint and the loss trace.
pub fn train_diffusion(run: &Run) -> Result<Vec<f64>> {
    let cfg = &run.config;
    let sched = run.config.schedule()?;
    let grads = harvested(run)?;
    let grids = training_grids(&grads, cfg.diffusion.grid_rule);
    let cond_m = if cfg.diffusion.conditional {
        let m = match (cfg.diffusion.condition_m, run.noise_level(&run.shared(0)?)?) {
            (Some(m), _) => m,
            (None, NoiseLevel::Known { m }) => m,
            (None, other) => {
                return Err(Error::Usage(format!(
                    "conditional training needs diffusion.condition_m with entry rule {other:?}"
                )))
            }
        };
        Some(m)
    } else {
        None
    };
    let out = train(
        &grids,
        cond_m,
        &sched,
        &cfg.diffusion.train,
        &run.rng(&[TRAIN_STREAM]),
    )?;
    let bytes = encode_checkpoint(&Checkpoint {
        predictor: out.predictor,
        seed: cfg.seed,
        digest: run.digest,
    })?;
    write_atomic(&run.path("diffusion", "predictor.pgdm"), &bytes)?;
    let rows: Vec<LossRow> = out
        .loss_trace
        .iter()
        .enumerate()
        .map(|(step, &loss)| LossRow { step, loss })
        .collect();
    write_atomic(
        &run.path("diffusion", "loss.csv"),
        &csv_bytes(&rows, &["step", "loss"])?,
    )?;
    Ok(out.loss_trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRow {
    pub trial: usize,
    pub m: Option<f64>,
    pub c: f64,
    pub t_prime: usize,
    pub t_lo: usize,
    pub t_hi: usize,
    pub clean_scale: f64,
    pub offset: f64,
}

const PROVENANCE_HEADER: [&str; 8] = ["trial", "m", "c", "t_prime", "t_lo", "t_hi", "clean_scale", "offset"];

/// Denoises every intercepted gradient; trials run in parallel, each with
/// its own stream.
pub fn denoise(run: &Run) -> Result<Vec<DenoiseProvenance>> {
    let sched = run.config.schedule()?;
    let ckpt = run.predictor()?;
    let results: Vec<(GradientVector, DenoiseProvenance)> = (0..run.trials())
        .into_par_iter()
        .map(|t| {
            let shared = run.shared(t)?;
            let level = run.noise_level(&shared)?;
            let mut rng = run.rng(&[DENOISE_STREAM, t as u64]);
            let d = run_pgla(&shared, &ckpt.predictor, level, &sched, &mut rng)?;
            Ok((d.gradient, d.provenance))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (t, (g, p)) in results.iter().enumerate() {
        run.write_gradient(&run.trial_path("denoise", "recovered", t), g)?;
        rows.push(ProvenanceRow {
            trial: t,
            m: p.m,
            c: p.c,
            t_prime: p.t_prime,
            t_lo: p.t_lo,
            t_hi: p.t_hi,
            clean_scale: p.clean_scale,
            offset: p.offset,
        });
    }
    write_atomic(
        &run.path("denoise", "provenance.csv"),
        &csv_bytes(&rows, &PROVENANCE_HEADER)?,
    )?;
    Ok(results.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionRow {
    pub trial: usize,
    pub target: String,
    pub label: usize,
    pub best_loss: f64,
    pub restarts: usize,
}

/// Inverts recovered (and optionally raw shared) gradients. Both targets
/// of a trial start from the same dummy point.
pub fn invert(run: &Run) -> Result<Vec<InversionRow>> {
    let cfg = &run.config;
    let model = run.attacker_model()?;
    let mut targets = vec!["recovered"];
    if cfg.attack.invert_shared {
        targets.push("shared");
    }
    let jobs: Vec<(usize, &str)> = (0..run.trials())
        .flat_map(|t| targets.iter().map(move |&k| (t, k)))
        .collect();
    let results: Vec<(usize, &str, Inversion)> = jobs
        .into_par_iter()
        .map(|(t, kind)| {
            let target = match kind {
                "recovered" => run.recovered(t)?,
                _ => run.shared(t)?,
            };
            let mut rng = run.rng(&[INVERT_STREAM, t as u64]);
            let inv = invert_gradients(&target, &model, &cfg.inversion, &mut rng)?;
            Ok((t, kind, inv))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (t, kind, inv) in &results {
        let mut payload = inv.image.data().to_vec();
        payload.extend_from_slice(&inv.label_logits);
        run.write(
            &run.trial_path("invert", kind, *t),
            LayerLayout::new([
                ("image", inv.image.shape().to_vec()),
                ("label_logits", vec![inv.label_logits.len()]),
            ])?,
            FileRole::Image,
            payload,
        )?;
        rows.push(InversionRow {
            trial: *t,
            target: kind.to_string(),
            label: inv.label,
            best_loss: inv.best_loss,
            restarts: inv.restarts,
        });
    }
    write_atomic(
        &run.path("invert", "inversions.csv"),
        &csv_bytes(&rows, &["trial", "target", "label", "best_loss", "restarts"])?,
    )?;
    Ok(rows)
}

fn reconstruction(run: &Run, kind: &str, t: usize) -> Result<(FlatTensor, usize)> {
    let f = run.read(&run.trial_path("invert", kind, t))?;
    let (shape, img) = f.layer("image")?;
    let (_, logits) = f.layer("label_logits")?;
    Ok((
        FlatTensor::new(shape.to_vec(), img.to_vec())?,
        crate::attack::argmax(logits),
    ))
}

/// Column means and standard deviations of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config_digest: String,
    pub seed: u64,
    pub trials: usize,
    pub columns: Vec<(String, Option<Summary>)>,
}

pub fn summarize_reports(run: &Run, reports: &[AttackReport]) -> ReportSummary {
    type Col = fn(&AttackReport) -> Option<f64>;
    let cols: [(&str, Col); 9] = [
        ("m", |r| r.m),
        ("cos_g_shared", |r| r.cos_g_shared),
        ("psnr_g_shared", |r| r.psnr_g_shared),
        ("psnr_i_shared", |r| r.psnr_i_shared),
        ("lra_shared", |r| r.lra_shared),
        ("cos_g", |r| r.cos_g),
        ("psnr_g", |r| r.psnr_g),
        ("psnr_i", |r| r.psnr_i),
        ("lra", |r| r.lra),
    ];
    ReportSummary {
        config_digest: run.digest_hex(),
        seed: run.config.seed,
        trials: reports.len(),
        columns: cols
            .iter()
            .map(|(name, f)| (name.to_string(), summarize(reports.iter().map(f))))
            .collect(),
    }
}

/// Scores every trial against the ground truth. Inversion metrics are
/// included when inversions exist.
pub fn eval(run: &Run) -> Result<Vec<AttackReport>> {
    let cfg = &run.config;
    let victims = victims(run)?;
    let prov: Vec<ProvenanceRow> = read_csv(&read_artifact(&run.path("denoise", "provenance.csv"))?)?;
    let reports = (0..run.trials())
        .into_par_iter()
        .map(|t| {
            let clean = run.clean(t)?;
            let shared = run.shared(t)?;
            let recovered = run.recovered(t)?;
            let (x, y) = &victims[t];
            let truth = [*y];
            let score = |candidate: &GradientVector, kind: &str| -> Result<Metrics> {
                let rec = if cfg.attack.invert && (kind == "recovered" || cfg.attack.invert_shared) {
                    Some(reconstruction(run, kind, t)?)
                } else {
                    None
                };
                let pred = rec.as_ref().map(|r| [r.1]);
                evaluate(&Evaluation {
                    clean: Some(&clean),
                    candidate: Some(candidate),
                    images: rec.as_ref().map(|r| (x, &r.0)),
                    labels: pred.as_ref().map(|p| (&truth[..], &p[..])),
                })
            };
            let mut r = AttackReport::new(t as u64, cfg.seed, run.digest_hex())
                .with_shared(score(&shared, "shared")?)
                .with_recovered(score(&recovered, "recovered")?);
            let p = prov.iter().find(|p| p.trial == t).ok_or_else(|| Error::MissingArtifact {
                path: run.path("denoise", "provenance.csv"),
                reason: format!("no row for trial {t}"),
            })?;
            r.m = p.m;
            r.t_prime = Some(p.t_prime);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&run.path("eval", "report.csv"), &report_csv(&reports)?)?;
    write_json(&run.path("eval", "summary.json"), &summarize_reports(run, &reports))?;
    Ok(reports)
}

/// Gradient metrics between two gradient files, e.g. a checked-in fixture
/// pair. Files with different digests are refused unless `force` is set.
pub fn eval_files(clean: &Path, candidate: &Path, force: bool) -> Result<Metrics> {
    let a = GradientFile::read(clean)?;
    let b = GradientFile::read(candidate)?;
    if !force && a.digest != b.digest {
        return Err(Error::DigestMismatch(format!(
            "{} and {} come from different configs",
            clean.display(),
            candidate.display()
        )));
    }
    evaluate(&Evaluation {
        clean: Some(&a.to_gradient()?),
        candidate: Some(&b.to_gradient()?),
        ..Default::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    Harvest,
    TrainDiffusion,
    Denoise,
    Invert,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Harvest,
        Stage::TrainDiffusion,
        Stage::Denoise,
        Stage::Invert,
        Stage::Eval,
    ];
}

pub fn run_stage(run: &Run, stage: Stage) -> Result<()> {
    match stage {
        Stage::Simulate => simulate(run).map(|_| ()),
        Stage::Harvest => harvest(run).map(|_| ()),
        Stage::TrainDiffusion => train_diffusion(run).map(|_| ()),
        Stage::Denoise => denoise(run).map(|_| ()),
        Stage::Invert => {
            if run.config.attack.invert {
                invert(run).map(|_| ())
            } else {
                Ok(())
            }
        }
        Stage::Eval => eval(run).map(|_| ()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Wall-clock record of a pipeline run. Kept apart from the CSV reports so
/// those stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub seed: u64,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

/// Runs every stage in order and writes `config.json` and `run.json`.
pub fn pipeline(run: &Run) -> Result<Vec<AttackReport>> {
    write_json(&run.out.join("config.json"), &run.config)?;
    let start = Instant::now();
    let mut stages = Vec::new();
    for stage in Stage::ALL {
        let t0 = Instant::now();
        log::info!("stage {stage:?} starting");
        run_stage(run, stage)?;
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("stage {stage:?} finished in {seconds:.2}s");
        stages.push(StageTiming { stage, seconds });
    }
    write_json(
        &run.out.join("run.json"),
        &RunRecord {
            config_digest: run.digest_hex(),
            seed: run.config.seed,
            stages,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    crate::harness::io::parse_report_csv(&read_artifact(&run.path("eval", "report.csv"))?)
}
