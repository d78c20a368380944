//! Noise-level-adaptive entry and reverse sampling.

use serde::{Deserialize, Serialize};

use crate::diffusion::{map_m_to_tprime, start_for_gamma, NoiseModel, NoiseSchedule, StartStep};
use crate::error::{param_err, Error, Result};
use crate::numeric::{fill_gaussian, FlatTensor, RngState};
use crate::shape::{adjust_with, restore, AdjustedGrid, GradientRole, GradientVector, GridRule};

/// How the denoiser decides where to enter the reverse chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Known noise scale `M` in clean-gradient units: `c = 1/sqrt(1 + M^2)`
    /// and `T'` is the first step with `gamma_t <= c^2`.
    Known { m: f64 },
    /// Unknown `M`; the caller supplies `c` in `(0, 1)` and `T'` solves
    /// `gamma_{T'} ~ c^2`.
    Scaled { c: f64 },
    /// Ignores the noise level: always enters at `t_prime` with
    /// `c = sqrt(gamma_{t_prime})`.
    Fixed { t_prime: usize },
}

/// Resolved entry: scaling factor and start step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub m: Option<f64>,
    pub c: f64,
    pub start: StartStep,
}

pub fn resolve_entry(level: NoiseLevel, sched: &NoiseSchedule) -> Result<Entry> {
    match level {
        NoiseLevel::Known { m } => {
            let start = map_m_to_tprime(m, sched)?;
            Ok(Entry {
                m: Some(m),
                c: 1.0 / (1.0 + m * m).sqrt(),
                start,
            })
        }
        NoiseLevel::Scaled { c } => {
            if !(c > 0.0 && c < 1.0) {
                return param_err(format!("c must lie in (0, 1), got {c}"));
            }
            Ok(Entry {
                m: None,
                c,
                start: start_for_gamma(c * c, sched),
            })
        }
        NoiseLevel::Fixed { t_prime } => {
            if t_prime > sched.steps() {
                return param_err(format!("t_prime {t_prime} exceeds T = {}", sched.steps()));
            }
            Ok(Entry {
                m: None,
                c: sched.gamma(t_prime).sqrt(),
                start: StartStep {
                    lo: t_prime.saturating_sub(1),
                    hi: t_prime,
                    t_prime,
                },
            })
        }
    }
}

/// `X_{T'} = c * grid` for a grid expressed in clean-gradient units.
pub fn entry_point(grid: &FlatTensor, level: NoiseLevel, sched: &NoiseSchedule) -> Result<(FlatTensor, Entry)> {
    let e = resolve_entry(level, sched)?;
    let data = grid
        .data()
        .iter()
        .map(|&v| (f64::from(v) * e.c) as f32)
        .collect();
    Ok((FlatTensor::from_parts_unchecked(grid.shape().to_vec(), data), e))
}

/// Runs `t_prime` reverse steps from `x_start`:
/// `X_{t-1} = (X_t - (1 - alpha_t)/sqrt(1 - gamma_t) f(X_t, t)) / sqrt(alpha_t) + sqrt(1 - alpha_t) z`
/// with `z ~ N(0, I)` for `t > 1` and `z = 0` at `t = 1`.
pub fn sample_reverse(
    x_start: &FlatTensor,
    t_prime: usize,
    f: &dyn NoiseModel,
    sched: &NoiseSchedule,
    rng: &mut RngState,
    cond: Option<&FlatTensor>,
) -> Result<FlatTensor> {
    if t_prime > sched.steps() {
        return param_err(format!("t_prime {t_prime} exceeds T = {}", sched.steps()));
    }
    if f.is_conditional() && cond.is_none() {
        return Err(Error::Usage(
            "conditional predictor needs a condition grid".into(),
        ));
    }
    let d = f.side() * f.side();
    if x_start.len() != d {
        return Err(Error::Layout(format!(
            "start grid has {} values, predictor expects {d}",
            x_start.len()
        )));
    }
    if t_prime == 0 {
        return Ok(x_start.clone());
    }
    let c = if f.is_conditional() { cond.map(|c| c.data()) } else { None };
    let mut x = x_start.data().to_vec();
    let mut z = vec![0.0f32; d];
    for t in (1..=t_prime).rev() {
        let eps = f.predict_batch(&x, &[t], c)?;
        let a = sched.alpha(t);
        let k = (1.0 - a) / (1.0 - sched.gamma(t)).sqrt();
        let inv = 1.0 / a.sqrt();
        if t > 1 {
            fill_gaussian(rng, (1.0 - a).sqrt(), &mut z);
        }
        for (i, (xv, &e)) in x.iter_mut().zip(&eps).enumerate() {
            let mut v = (f64::from(*xv) - k * f64::from(e)) * inv;
            if t > 1 {
                v += f64::from(z[i]);
            }
            *xv = v as f32;
        }
    }
    FlatTensor::new(x_start.shape().to_vec(), x)
        .map_err(|_| Error::Divergence("reverse sampling produced non-finite values".into()))
}

/// What the denoiser did, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseProvenance {
    pub m: Option<f64>,
    pub c: f64,
    pub t_prime: usize,
    pub t_lo: usize,
    pub t_hi: usize,
    /// Estimated spread of the clean gradient used to express the input in
    /// clean units.
    pub clean_scale: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub gradient: GradientVector,
    pub provenance: DenoiseProvenance,
}

/// `M` from the observed spread `s'` of a noisy gradient and the noise
/// standard deviation: the clean spread is `sqrt(s'^2 - std^2)`.
pub fn m_from_noise_std(observed_scale: f64, noise_std: f64) -> f64 {
    if noise_std <= 0.0 {
        return 0.0;
    }
    let clean_sq = observed_scale * observed_scale - noise_std * noise_std;
    let floor = (1e-6 * observed_scale).powi(2).max(f64::MIN_POSITIVE);
    noise_std / clean_sq.max(floor).sqrt()
}

/// Square grid for `g` matching the predictor size.
pub fn adjust_for(g: &GradientVector, side: usize) -> Result<AdjustedGrid> {
    for rule in [GridRule::Strict, GridRule::Inclusive] {
        let a = adjust_with(g, rule);
        if a.side() == side {
            return Ok(a);
        }
    }
    Err(Error::Layout(format!(
        "a gradient of length {} does not fit the predictor's {side}x{side} grid",
        g.len()
    )))
}

/// Recovers a clean-gradient estimate from a perturbed one.
///
/// The input is standardized to scale `s'`; the clean scale is taken as
/// `c s'`, so the entry grid `c * (v - offset) / (c s')` is the standardized
/// input itself. After `T'` reverse steps the result is mapped back with the
/// clean scale. With `T' = 0` the input is returned unchanged. Conditional
/// predictors are conditioned on the input expressed in clean units.
pub fn denoise(
    gradient: &GradientVector,
    f: &dyn NoiseModel,
    level: NoiseLevel,
    sched: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<Denoised> {
    let adjusted = adjust_for(gradient, f.side())?;
    let entry = resolve_entry(level, sched)?;
    let normalized = adjusted.normalized();
    let clean_scale = entry.c * normalized.scale();
    let offset = normalized.offset();
    let provenance = DenoiseProvenance {
        m: entry.m,
        c: entry.c,
        t_prime: entry.start.t_prime,
        t_lo: entry.start.lo,
        t_hi: entry.start.hi,
        clean_scale,
        offset,
    };
    if entry.start.t_prime == 0 {
        return Ok(Denoised {
            gradient: gradient.clone().with_role(GradientRole::Recovered),
            provenance,
        });
    }
    let len = gradient.len();
    let clean_units: Vec<f32> = normalized
        .grid()
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < len { (f64::from(v) / entry.c) as f32 } else { 0.0 })
        .collect();
    let clean_units = FlatTensor::new(normalized.grid().shape().to_vec(), clean_units)?;
    let (x_start, _) = entry_point(&clean_units, level, sched)?;
    let cond = f.is_conditional().then_some(&clean_units);
    let x0 = sample_reverse(&x_start, entry.start.t_prime, f, sched, rng, cond)?;
    let out = AdjustedGrid::from_parts(x0, len, clean_scale, offset)?;
    let gradient = restore(&out, gradient.layout())?;
    Ok(Denoised {
        gradient,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, q_sample};
    use crate::shape::LayerLayout;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Returns a fixed noise grid and counts calls.
    struct Oracle {
        side: usize,
        eps: Vec<f32>,
        calls: AtomicUsize,
    }

    impl NoiseModel for Oracle {
        fn side(&self) -> usize {
            self.side
        }
        fn is_conditional(&self) -> bool {
            false
        }
        fn predict_batch(&self, _: &[f32], _: &[usize], _: Option<&[f32]>) -> Result<Vec<f32>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.eps.clone())
        }
    }

    #[test]
    fn entry_examples() {
        let s = NoiseSchedule::standard();
        let e = resolve_entry(NoiseLevel::Known { m: 0.0 }, &s).unwrap();
        assert_eq!((e.c, e.start.t_prime), (1.0, 0));
        let e = resolve_entry(NoiseLevel::Known { m: 1.0 }, &s).unwrap();
        assert!((e.c - 0.70711).abs() < 1e-5);
        let e = resolve_entry(NoiseLevel::Known { m: 3.0 }, &s).unwrap();
        assert!((e.c - 0.31623).abs() < 1e-5);
        assert!(resolve_entry(NoiseLevel::Scaled { c: 1.0 }, &s).is_err());
        assert!(resolve_entry(NoiseLevel::Scaled { c: 0.0 }, &s).is_err());
        let sc = resolve_entry(NoiseLevel::Scaled { c: 0.5 }, &s).unwrap();
        assert!(s.gamma(sc.start.t_prime) <= 0.25 && s.gamma(sc.start.t_prime - 1) > 0.25);
    }

    #[test]
    fn perfect_predictor_single_step_recovers_x0() {
        let s = make_schedule(10, 0.01, 0.2).unwrap();
        let x0 = FlatTensor::new(vec![1, 2, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let eps = FlatTensor::new(vec![1, 2, 2], vec![0.3, 0.1, -0.7, 1.2]).unwrap();
        let x1 = q_sample(&x0, 1, &eps, &s).unwrap();
        let f = Oracle {
            side: 2,
            eps: eps.data().to_vec(),
            calls: AtomicUsize::new(0),
        };
        let mut rng = RngState::new(1);
        let out = sample_reverse(&x1, 1, &f, &s, &mut rng, None).unwrap();
        for (a, b) in out.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn call_and_draw_counts() {
        let s = NoiseSchedule::standard();
        let f = Oracle {
            side: 3,
            eps: vec![0.0; 9],
            calls: AtomicUsize::new(0),
        };
        let x = FlatTensor::zeros(vec![1, 3, 3]);
        let mut rng = RngState::new(1);
        sample_reverse(&x, 7, &f, &s, &mut rng, None).unwrap();
        assert_eq!(f.calls.load(Ordering::SeqCst), 7);
        // Each noise draw of 9 values consumes 10 uniforms (5 Box-Muller pairs).
        assert_eq!(rng.position(), 6 * 10);
        let same = sample_reverse(&x, 0, &f, &s, &mut rng, None).unwrap();
        assert_eq!(same, x);
    }

    #[test]
    fn zero_noise_denoise_is_identity() {
        let s = NoiseSchedule::standard();
        let g = GradientVector::from_vec(
            vec![0.1, -0.2, 0.3, 0.05, 0.0],
            LayerLayout::flat(5).unwrap(),
            GradientRole::Perturbed,
        )
        .unwrap();
        let f = Oracle {
            side: 3,
            eps: vec![0.0; 9],
            calls: AtomicUsize::new(0),
        };
        let d = denoise(&g, &f, NoiseLevel::Known { m: 0.0 }, &s, &mut RngState::new(2)).unwrap();
        assert_eq!(d.gradient.data(), g.data());
        assert_eq!(d.gradient.layout(), g.layout());
        assert_eq!(d.gradient.role(), GradientRole::Recovered);
        assert_eq!(d.provenance.t_prime, 0);
        let small = Oracle {
            side: 2,
            eps: vec![0.0; 4],
            calls: AtomicUsize::new(0),
        };
        assert!(matches!(
            denoise(&g, &small, NoiseLevel::Known { m: 1.0 }, &s, &mut RngState::new(2)),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn m_estimate() {
        // clean spread 3, noise 4 -> observed 5
        assert!((m_from_noise_std(5.0, 4.0) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(m_from_noise_std(5.0, 0.0), 0.0);
        assert!(m_from_noise_std(1.0, 2.0).is_finite());
    }
}
