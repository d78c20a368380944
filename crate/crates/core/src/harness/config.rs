//! Experiment configuration: JSON schema, validation and content digest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{InversionConfig, SurrogateInit};
use crate::autodiff::{
    synthetic_dataset, uniform_dataset, Activation, ModelSpec, ProbeDataset, ProbeSource,
};
use crate::diffusion::{make_schedule, resolve_entry, NoiseLevel, NoiseSchedule, TrainConfig};
use crate::error::{Error, FieldError, Result};
use crate::harness::idx::load_idx_dataset;
use crate::harness::io::read_artifact;
use crate::perturb::{FlTopology, PerturbationSpec};
use crate::shape::GridRule;

/// Everything one experiment needs. Every field has a default, so `{}` is a
/// valid config describing the desk-scale setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// The victim's classifier.
    pub model: ModelSpec,
    /// The victims' private samples.
    pub data: DataConfig,
    pub perturbation: PerturbationSpec,
    pub topology: FlTopology,
    /// Adds server-side noise to the aggregate when the topology calls for it.
    pub server_noise: bool,
    pub schedule: ScheduleConfig,
    pub probe: ProbeConfig,
    pub surrogate: SurrogateConfig,
    pub diffusion: DiffusionConfig,
    pub denoise: DenoiseConfig,
    pub inversion: InversionConfig,
    pub attack: AttackConfig,
    /// Not part of the digest.
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: ProbeSource,
    /// Caps how many samples a file-backed source contributes.
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub source: ProbeSource,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub init: SurrogateInit,
    pub activation: Activation,
    /// Needed when the first layer is convolutional; defaults to the model's
    /// input shape, the image format the attacker probes with.
    pub input_shape: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub train: TrainConfig,
    pub conditional: bool,
    /// Noise level of the training conditions; estimated from the first
    /// intercepted gradient when absent.
    pub condition_m: Option<f64>,
    pub grid_rule: GridRule,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    /// Entry rule; absent means a known level derived from the perturbation
    /// spec's noise standard deviation.
    pub level: Option<NoiseLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub trials: usize,
    pub invert: bool,
    /// Also inverts the raw intercepted gradient, from the same start.
    pub invert_shared: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelSpec::mlp(vec![1, 16, 16], &[32], 10, Activation::Sigmoid),
            data: DataConfig::default(),
            perturbation: PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 600),
            topology: FlTopology {
                clients: 10,
                aggregation_times: 1,
                exposures: 1,
            },
            server_noise: false,
            schedule: ScheduleConfig::default(),
            probe: ProbeConfig::default(),
            surrogate: SurrogateConfig::default(),
            diffusion: DiffusionConfig::default(),
            denoise: DenoiseConfig::default(),
            inversion: InversionConfig::default(),
            attack: AttackConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: ProbeSource::Synthetic { seed: 1 },
            max_samples: None,
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            source: ProbeSource::Synthetic { seed: 2 },
            count: 2000,
        }
    }
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            init: SurrogateInit::Broadcast,
            activation: Activation::Sigmoid,
            input_shape: None,
        }
    }
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            conditional: false,
            condition_m: None,
            grid_rule: GridRule::Strict,
        }
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            trials: 32,
            invert: true,
            invert_shared: true,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Both syntax and semantic
    /// problems come back as [`Error::Config`] with dotted field paths.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { String::new() } else { path };
            Error::Config(vec![FieldError::new(field, e.into_inner().to_string())])
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_artifact(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Config(vec![FieldError::new("", "config is not UTF-8")]))?;
        Self::from_json(text)
    }

    /// Collects every field-level problem.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |field: &str, r: Result<()>| {
            if let Err(e) = r {
                errs.push(FieldError::new(field, e.to_string()));
            }
        };
        check("model", self.model.validate());
        check("perturbation", self.perturbation.validate());
        check("topology", self.topology.validate());
        check("schedule", self.schedule().map(|_| ()));
        check("probe.count", positive(self.probe.count, "probe count"));
        check("attack.trials", positive(self.attack.trials, "trial count"));
        check("diffusion.train.batch_size", positive(self.diffusion.train.batch_size, "batch size"));
        let lr = self.diffusion.train.learning_rate;
        check(
            "diffusion.train.learning_rate",
            if lr > 0.0 && lr.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("must be positive, got {lr}")))
            },
        );
        let p = self.diffusion.train.predictor;
        check(
            "diffusion.train.predictor",
            if p.hidden > 0 && p.time_dim >= 2 && p.time_dim % 2 == 0 {
                Ok(())
            } else {
                Err(Error::Parameter(
                    "hidden must be positive and time_dim a positive even number".into(),
                ))
            },
        );
        if let Some(m) = self.diffusion.condition_m {
            check(
                "diffusion.condition_m",
                if m >= 0.0 && m.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("must be finite and >= 0, got {m}")))
                },
            );
        }
        if let (Some(level), Ok(s)) = (self.denoise.level, self.schedule()) {
            check("denoise.level", resolve_entry(level, &s).map(|_| ()));
        }
        check("inversion", self.inversion.validate());
        if let Some(shape) = &self.surrogate.input_shape {
            check(
                "surrogate.input_shape",
                if shape.iter().product::<usize>() == self.model.input_len() {
                    Ok(())
                } else {
                    Err(Error::Shape(format!(
                        "{shape:?} does not match the model input {:?}",
                        self.model.input_shape
                    )))
                },
            );
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.schedule.steps, self.schedule.beta_start, self.schedule.beta_end)
    }

    /// SHA-256 of the canonical JSON form with `output_dir` cleared.
    pub fn digest(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

fn positive(v: usize, what: &str) -> Result<()> {
    if v == 0 {
        Err(Error::Parameter(format!("{what} must be at least 1")))
    } else {
        Ok(())
    }
}

pub fn digest_hex(d: &[u8; 32]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Materializes a dataset source with `n` samples of `input_shape`.
///
/// Generated sources produce exactly `n` samples; file-backed sources keep
/// at most `n` (and at most `cap`).
pub fn load_source(
    source: &ProbeSource,
    input_shape: &[usize],
    classes: usize,
    n: usize,
    cap: Option<usize>,
) -> Result<ProbeDataset> {
    match source {
        ProbeSource::Uniform { seed } => uniform_dataset(*seed, input_shape, classes, n),
        ProbeSource::Synthetic { seed } => synthetic_dataset(*seed, input_shape, classes, n),
        ProbeSource::IdxFile { images, labels } => {
            let keep = cap.map_or(n, |c| c.min(n));
            let d = load_idx_dataset(images, labels, classes, Some(keep))?;
            if d.input_shape().iter().product::<usize>() != input_shape.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "dataset images are {:?}, model takes {input_shape:?}",
                    d.input_shape()
                )));
            }
            Ok(d)
        }
    }
}
