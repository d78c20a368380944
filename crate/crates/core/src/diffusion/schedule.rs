//! Linear variance schedule, forward corruption and the Gaussian posterior.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::numeric::FlatTensor;

/// `T` steps with `beta_t` linear from `beta_start` to `beta_end`,
/// `alpha_t = 1 - beta_t` and `gamma_t = prod_{s <= t} alpha_s`.
///
/// Indexing follows the math: `beta(t)` and `alpha(t)` take `t` in `1..=T`,
/// `gamma(t)` takes `t` in `0..=T` with `gamma(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    gamma: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return param_err("schedule needs at least one step");
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return param_err(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        ));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut gamma = Vec::with_capacity(steps + 1);
    gamma.push(1.0);
    let mut acc = 1.0f64;
    for b in &beta {
        acc *= 1.0 - b;
        gamma.push(acc);
    }
    Ok(NoiseSchedule {
        beta_start,
        beta_end,
        beta,
        gamma,
    })
}

impl NoiseSchedule {
    /// The default schedule: 1000 steps, beta from 1e-4 to 0.02.
    pub fn standard() -> Self {
        make_schedule(1000, 1e-4, 0.02).expect("valid constants")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return param_err(format!("step {t} outside 1..={}", self.steps()));
        }
        Ok(())
    }

    /// Smallest `t >= 0` with `gamma_t <= target`, or `T` if none.
    pub fn first_step_at_or_below(&self, target: f64) -> usize {
        // gamma is strictly decreasing, so binary search on the predicate.
        let idx = self.gamma.partition_point(|&g| g > target);
        idx.min(self.steps())
    }
}

fn same_shape(a: &FlatTensor, b: &FlatTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Forward corruption `sqrt(gamma_t) x0 + sqrt(1 - gamma_t) eps`.
pub fn q_sample(x0: &FlatTensor, t: usize, eps: &FlatTensor, sched: &NoiseSchedule) -> Result<FlatTensor> {
    sched.check_step(t)?;
    same_shape(x0, eps)?;
    let g = sched.gamma(t);
    let (a, b) = (g.sqrt(), (1.0 - g).sqrt());
    let data = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| (a * f64::from(x) + b * f64::from(e)) as f32)
        .collect();
    Ok(FlatTensor::from_parts_unchecked(x0.shape().to_vec(), data))
}

/// One Markov transition `sqrt(alpha_t) x + sqrt(1 - alpha_t) eps`.
pub fn q_step(x_prev: &FlatTensor, t: usize, eps: &FlatTensor, sched: &NoiseSchedule) -> Result<FlatTensor> {
    sched.check_step(t)?;
    same_shape(x_prev, eps)?;
    let al = sched.alpha(t);
    let (a, b) = (al.sqrt(), (1.0 - al).sqrt());
    let data = x_prev
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| (a * f64::from(x) + b * f64::from(e)) as f32)
        .collect();
    Ok(FlatTensor::from_parts_unchecked(x_prev.shape().to_vec(), data))
}

/// Which `X_t` coefficient the posterior mean uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorForm {
    /// `sqrt(alpha_t) (1 - gamma_{t-1}) / (1 - gamma_t)`, what Gaussian
    /// conditioning of the forward process gives.
    #[default]
    Conditioned,
    /// `alpha_t (1 - gamma_{t-1}) / (1 - gamma_t)`, without the square root.
    AsPrinted,
}

/// Coefficients of `q(X_{t-1} | X_t, X_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCoefficients {
    pub x0: f64,
    pub xt: f64,
    pub var: f64,
}

/// Posterior coefficients from the three schedule quantities directly.
pub fn posterior_coefficients_raw(
    alpha_t: f64,
    gamma_prev: f64,
    gamma_t: f64,
    form: PosteriorForm,
) -> PosteriorCoefficients {
    let denom = 1.0 - gamma_t;
    let beta = 1.0 - alpha_t;
    let xt_factor = match form {
        PosteriorForm::Conditioned => alpha_t.sqrt(),
        PosteriorForm::AsPrinted => alpha_t,
    };
    PosteriorCoefficients {
        x0: gamma_prev.sqrt() * beta / denom,
        xt: xt_factor * (1.0 - gamma_prev) / denom,
        var: (1.0 - gamma_prev) * beta / denom,
    }
}

pub fn posterior_coefficients(t: usize, sched: &NoiseSchedule, form: PosteriorForm) -> Result<PosteriorCoefficients> {
    sched.check_step(t)?;
    if t == 1 {
        return Ok(PosteriorCoefficients {
            x0: 1.0,
            xt: 0.0,
            var: 0.0,
        });
    }
    Ok(posterior_coefficients_raw(
        sched.alpha(t),
        sched.gamma(t - 1),
        sched.gamma(t),
        form,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub mu: FlatTensor,
    pub sigma_sq: f64,
}

/// Mean and variance of `X_{t-1}` given `X_0` and `X_t`. At `t = 1` the
/// posterior collapses to `X_0`.
pub fn posterior_params(
    x0: &FlatTensor,
    xt: &FlatTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<PosteriorParams> {
    posterior_params_with(x0, xt, t, sched, PosteriorForm::Conditioned)
}

pub fn posterior_params_with(
    x0: &FlatTensor,
    xt: &FlatTensor,
    t: usize,
    sched: &NoiseSchedule,
    form: PosteriorForm,
) -> Result<PosteriorParams> {
    same_shape(x0, xt)?;
    let c = posterior_coefficients(t, sched, form)?;
    let data = x0
        .data()
        .iter()
        .zip(xt.data())
        .map(|(&a, &b)| (c.x0 * f64::from(a) + c.xt * f64::from(b)) as f32)
        .collect();
    Ok(PosteriorParams {
        mu: FlatTensor::from_parts_unchecked(x0.shape().to_vec(), data),
        sigma_sq: c.var,
    })
}

/// Start step chosen for a noise level, with its bracketing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartStep {
    /// `T' - 1` (or 0 when `T' = 0`).
    pub lo: usize,
    /// Equal to `t_prime`.
    pub hi: usize,
    pub t_prime: usize,
}

/// `T' = min { t >= 0 : gamma_t <= 1 / (1 + M^2) }`, clamped to `T`.
pub fn map_m_to_tprime(m: f64, sched: &NoiseSchedule) -> Result<StartStep> {
    if !(m >= 0.0) || m.is_nan() {
        return param_err(format!("noise scale M must be >= 0, got {m}"));
    }
    Ok(start_for_gamma(1.0 / (1.0 + m * m), sched))
}

/// Start step for an explicit target `gamma`, e.g. `c^2` when only the
/// scaling factor `c` is known.
pub fn start_for_gamma(target: f64, sched: &NoiseSchedule) -> StartStep {
    let t_prime = sched.first_step_at_or_below(target);
    StartStep {
        lo: t_prime.saturating_sub(1),
        hi: t_prime,
        t_prime,
    }
}
