//! Command-line driver for the experiment stages.
//!
//! Every subcommand reads a JSON config (defaults when `--config` is absent)
//! and writes its artifacts under the output directory. Failures print one
//! JSON error record on stderr; config errors exit 2, missing artifacts 3,
//! anything else 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgla::diffusion::{map_m_to_tprime, posterior_coefficients_raw, NoiseSchedule, PosteriorForm};
use pgla::harness::{
    configure_threads, eval_files, pipeline, run_stage, summarize_reports, ExperimentConfig, Run,
    Stage,
};
use pgla::numeric::cosine_similarity_slices;
use pgla::perturb::{client_sigma, gaussian_constant, server_sigma, FlTopology, PerturbationSpec};
use pgla::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pgla", version, about = "Gradient privacy testbed: protect, denoise, invert")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the number of attack trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Accepts artifacts written under a different config digest.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the protected federated round and writes shared gradients.
    Simulate,
    /// Computes surrogate gradients on the probe set.
    Harvest,
    /// Trains the gradient denoiser.
    TrainDiffusion,
    /// Denoises every shared gradient.
    Denoise,
    /// Inverts shared and recovered gradients into images and labels.
    Invert,
    /// Runs every stage in order.
    Pipeline,
    /// Scores a run, or a single pair of gradient files.
    Eval {
        #[arg(long, requires = "candidate")]
        clean: Option<PathBuf>,
        #[arg(long, requires = "clean")]
        candidate: Option<PathBuf>,
    },
    /// Checks the library against the independent reference formulas.
    Selftest,
}

fn load_config(cli: &Cli) -> pgla::Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(t) = cli.trials {
        c.attack.trials = t;
    }
    Ok(c)
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::Simulate => Stage::Simulate,
        Command::Harvest => Stage::Harvest,
        Command::TrainDiffusion => Stage::TrainDiffusion,
        Command::Denoise => Stage::Denoise,
        Command::Invert => Stage::Invert,
        Command::Eval { .. } => Stage::Eval,
        Command::Pipeline | Command::Selftest => return None,
    })
}

fn execute(cli: &Cli) -> pgla::Result<Value> {
    configure_threads()?;
    match &cli.command {
        Command::Selftest => return selftest(),
        Command::Eval {
            clean: Some(clean),
            candidate: Some(candidate),
        } => {
            let m = eval_files(clean, candidate, cli.force)?;
            return Ok(serde_json::to_value(m)?);
        }
        _ => {}
    }
    let run = Run::new(load_config(cli)?, cli.out.clone(), cli.force)?;
    let record = match (&cli.command, stage_of(&cli.command)) {
        (Command::Pipeline, _) => {
            let reports = pipeline(&run)?;
            json!({"stage": "pipeline", "summary": summarize_reports(&run, &reports)})
        }
        (_, Some(stage)) => {
            run_stage(&run, stage)?;
            json!({"stage": stage})
        }
        _ => unreachable!("handled above"),
    };
    let mut record = record;
    record["out"] = json!(run.out());
    record["config_digest"] = json!(run.digest_hex());
    Ok(record)
}

fn check(name: &str, ok: bool, detail: Value) -> Value {
    json!({"check": name, "pass": ok, "detail": detail})
}

fn selftest() -> pgla::Result<Value> {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for (eps, m) in [(0.5, 50u64), (1.0, 600), (4.0, 10)] {
        let spec = PerturbationSpec::gaussian(eps, 1e-5, 1.0, m);
        let got = client_sigma(&spec)?;
        let want = pgla_oracle::dp::gaussian_sigma(1.0, m, eps, 1e-5);
        worst = worst.max((got - want).abs() / want);
        for (n, t) in [(10u64, 3u64), (4, 10)] {
            let topo = FlTopology::new(n, t, 1)?;
            let got = server_sigma(&topo, 1.0, m, eps, gaussian_constant(1e-5)?);
            let want = pgla_oracle::dp::server_sigma(n, t, 1, 1.0, m, eps, 1e-5);
            worst = worst.max(if want == 0.0 { got.abs() } else { (got - want).abs() / want });
        }
    }
    checks.push(check("dp_calibration", worst <= 1e-12, json!({"max_rel_error": worst})));

    let sched = NoiseSchedule::standard();
    let (steps, lo, hi) = (sched.steps(), sched.beta_start(), sched.beta_end());
    let mut worst = 0.0f64;
    for t in [2, 10, 100, 500, 1000] {
        let c = posterior_coefficients_raw(
            sched.alpha(t),
            sched.gamma(t - 1),
            sched.gamma(t),
            PosteriorForm::Conditioned,
        );
        let (x0, xt, var) = pgla_oracle::diffusion::posterior(sched.alpha(t), sched.gamma(t - 1));
        worst = worst.max((c.x0 - x0).abs()).max((c.xt - xt).abs()).max((c.var - var).abs());
    }
    checks.push(check("posterior", worst <= 1e-10, json!({"max_abs_error": worst})));

    let got = map_m_to_tprime(0.1, &sched)?.t_prime;
    let want = pgla_oracle::diffusion::start_step(0.1, steps, lo, hi);
    checks.push(check("start_step", got == want, json!({"t_prime": got, "oracle": want})));

    let a = [0.3f32, -1.2, 0.5, 2.0];
    let b = [0.1f32, -1.0, 0.9, 1.5];
    let got = cosine_similarity_slices(&a, &b)?.value;
    let to64 = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    let want = pgla_oracle::metrics::cosine(&to64(&a), &to64(&b));
    checks.push(check("cosine", (got - want).abs() <= 1e-12, json!({"value": got, "oracle": want})));

    let failed: Vec<&Value> = checks.iter().filter(|c| c["pass"] != json!(true)).collect();
    if !failed.is_empty() {
        return Err(Error::Input(format!(
            "selftest failed: {}",
            serde_json::to_string(&failed)?
        )));
    }
    Ok(json!({"selftest": "pass", "checks": checks}))
}

fn error_record(e: &Error) -> (u8, Value) {
    match e {
        Error::Config(fields) => (2, json!({"error": "config", "message": e.to_string(), "fields": fields})),
        Error::MissingArtifact { path, reason } => (
            3,
            json!({"error": "missing_artifact", "message": e.to_string(), "path": path, "reason": reason}),
        ),
        Error::DigestMismatch(_) => (1, json!({"error": "digest_mismatch", "message": e.to_string()})),
        _ => (1, json!({"error": "runtime", "message": e.to_string()})),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, record) = error_record(&e);
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
