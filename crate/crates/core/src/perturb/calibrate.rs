//! Noise calibration for client-side and server-side DP perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// `(epsilon, delta)`-DP Gaussian mechanism.
    GaussianDp,
    /// `epsilon`-DP Laplace mechanism.
    LaplaceDp,
    /// Uncalibrated noise of a fixed scale, typically chosen per layer.
    PerLayerRandom,
}

/// How a shared gradient is protected.
///
/// For the DP mechanisms the noise scale is always derived from
/// `(epsilon, delta, clip, min_dataset_size)`; only [`Mechanism::PerLayerRandom`]
/// takes an explicit `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub mechanism: Mechanism,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Smallest local dataset size `m` among clients.
    #[serde(default = "default_m")]
    pub min_dataset_size: u64,
    /// Noise family for [`Mechanism::PerLayerRandom`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseKind>,
    /// Scale for [`Mechanism::PerLayerRandom`]: a standard deviation for
    /// Gaussian noise, the Laplace parameter `b` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

fn default_epsilon() -> f64 {
    1.0
}
fn default_clip() -> f64 {
    1.0
}
fn default_m() -> u64 {
    1
}

impl PerturbationSpec {
    pub fn gaussian(epsilon: f64, delta: f64, clip: f64, min_dataset_size: u64) -> Self {
        Self {
            mechanism: Mechanism::GaussianDp,
            epsilon,
            delta,
            clip,
            min_dataset_size,
            noise: None,
            scale: None,
        }
    }

    pub fn laplace(epsilon: f64, clip: f64, min_dataset_size: u64) -> Self {
        Self {
            mechanism: Mechanism::LaplaceDp,
            epsilon,
            delta: 0.0,
            clip,
            min_dataset_size,
            noise: None,
            scale: None,
        }
    }

    /// Fixed-scale noise with no privacy accounting.
    pub fn random(noise: NoiseKind, scale: f64, clip: f64) -> Self {
        Self {
            mechanism: Mechanism::PerLayerRandom,
            epsilon: 0.0,
            delta: 0.0,
            clip,
            min_dataset_size: 1,
            noise: Some(noise),
            scale: Some(scale),
        }
    }

    pub fn is_dp(&self) -> bool {
        matches!(self.mechanism, Mechanism::GaussianDp | Mechanism::LaplaceDp)
    }

    /// Gaussian DP with `epsilon` outside `(0, 1]`, where the classical
    /// calibration bound is no longer guaranteed.
    pub fn is_extended_range(&self) -> bool {
        self.mechanism == Mechanism::GaussianDp && self.epsilon > 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) || !self.clip.is_finite() {
            return param_err(format!("clip must be > 0, got {}", self.clip));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return param_err(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        match self.mechanism {
            Mechanism::GaussianDp | Mechanism::LaplaceDp => {
                if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
                    return param_err(format!("epsilon must be > 0, got {}", self.epsilon));
                }
                if self.min_dataset_size == 0 {
                    return param_err("min_dataset_size must be at least 1");
                }
                if self.scale.is_some() {
                    return param_err("DP mechanisms derive their scale; do not set `scale`");
                }
                if self.mechanism == Mechanism::GaussianDp && self.delta == 0.0 {
                    return param_err("the Gaussian mechanism needs delta > 0");
                }
            }
            Mechanism::PerLayerRandom => match self.scale {
                Some(s) if s >= 0.0 && s.is_finite() => {}
                other => {
                    return param_err(format!(
                        "per_layer_random needs a finite scale >= 0, got {other:?}"
                    ))
                }
            },
        }
        Ok(())
    }

    /// Distribution family of the added noise.
    pub fn noise_kind(&self) -> NoiseKind {
        match self.mechanism {
            Mechanism::GaussianDp => NoiseKind::Gaussian,
            Mechanism::LaplaceDp => NoiseKind::Laplace,
            Mechanism::PerLayerRandom => self.noise.unwrap_or(NoiseKind::Gaussian),
        }
    }

    /// Resolved noise scale `sigma` (or Laplace `b`).
    pub fn sigma(&self) -> Result<f64> {
        self.validate()?;
        match self.mechanism {
            Mechanism::PerLayerRandom => Ok(self.scale.unwrap_or(0.0)),
            _ => client_sigma(self),
        }
    }

    /// Standard deviation of one noise coordinate (`sqrt(2) b` for Laplace).
    pub fn noise_std(&self) -> Result<f64> {
        let s = self.sigma()?;
        Ok(match self.noise_kind() {
            NoiseKind::Gaussian => s,
            NoiseKind::Laplace => s * std::f64::consts::SQRT_2,
        })
    }

    /// `(epsilon, delta)` charged per release, zero for uncalibrated noise.
    pub fn budget(&self) -> (f64, f64) {
        match self.mechanism {
            Mechanism::GaussianDp => (self.epsilon, self.delta),
            Mechanism::LaplaceDp => (self.epsilon, 0.0),
            Mechanism::PerLayerRandom => (0.0, 0.0),
        }
    }
}

/// Sensitivity `2C/m` of a clipped average over `m` samples.
pub fn sensitivity(clip: f64, m: u64) -> f64 {
    2.0 * clip / m as f64
}

/// `sqrt(2 ln(1.25 / delta))`, the Gaussian-mechanism constant.
pub fn gaussian_constant(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return param_err(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt())
}

/// Client noise scale.
///
/// Laplace: `(2C/m) / epsilon`, the Laplace parameter `b`.
/// Gaussian: `(2C/m) sqrt(2 ln(1.25/delta)) / epsilon`, a standard deviation.
pub fn client_sigma(spec: &PerturbationSpec) -> Result<f64> {
    if !(spec.epsilon > 0.0) || !spec.epsilon.is_finite() {
        return param_err(format!("epsilon must be > 0, got {}", spec.epsilon));
    }
    if !(spec.clip > 0.0) || spec.min_dataset_size == 0 {
        return param_err("clip must be > 0 and min_dataset_size >= 1");
    }
    let ds = sensitivity(spec.clip, spec.min_dataset_size);
    match spec.mechanism {
        Mechanism::LaplaceDp => Ok(ds / spec.epsilon),
        Mechanism::GaussianDp => Ok(ds * gaussian_constant(spec.delta)? / spec.epsilon),
        Mechanism::PerLayerRandom => Err(Error::Parameter(
            "per_layer_random noise is not DP-calibrated".into(),
        )),
    }
}

/// Client count and exposure schedule of a federated deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlTopology {
    /// Number of clients `N`.
    pub clients: u64,
    /// Aggregation times `T`.
    pub aggregation_times: u64,
    /// Exposures of uploaded parameters `L`.
    pub exposures: u64,
}

impl FlTopology {
    pub fn new(clients: u64, aggregation_times: u64, exposures: u64) -> Result<Self> {
        let t = Self {
            clients,
            aggregation_times,
            exposures,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.aggregation_times == 0 || self.exposures == 0 {
            return param_err(format!(
                "clients, aggregation_times and exposures must all be >= 1 ({self:?})"
            ));
        }
        Ok(())
    }
}

/// Server noise scale for noising before aggregation.
///
/// Zero while `T <= L sqrt(N)`; otherwise `c_dp * ds_s / epsilon` with
/// `ds_s = (2C/m) sqrt(T^2 - L^2 N) / N`.
pub fn server_sigma(topo: &FlTopology, clip: f64, m: u64, epsilon: f64, c_dp: f64) -> f64 {
    let n = topo.clients as f64;
    let t = topo.aggregation_times as f64;
    let l = topo.exposures as f64;
    // Integer comparison of T^2 <= L^2 N avoids rounding at the boundary.
    let t2 = u128::from(topo.aggregation_times).pow(2);
    let l2n = u128::from(topo.exposures).pow(2) * u128::from(topo.clients);
    if t2 <= l2n {
        return 0.0;
    }
    let ds = sensitivity(clip, m) * (t * t - l * l * n).sqrt() / n;
    c_dp * ds / epsilon
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_sigma_examples() {
        let l = PerturbationSpec::laplace(1.0, 1.0, 100);
        assert!((client_sigma(&l).unwrap() - 0.02).abs() < 1e-15);
        let g = PerturbationSpec::gaussian(2.0, 1e-5, 1.0, 100);
        assert!((client_sigma(&g).unwrap() - 0.048448).abs() < 1e-6);
        let g1 = PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 100);
        let r = client_sigma(&g1).unwrap() / client_sigma(&g).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let bad = PerturbationSpec::gaussian(1.0, 0.0, 1.0, 100);
        assert!(client_sigma(&bad).is_err());
    }

    #[test]
    fn server_sigma_examples() {
        let t40 = FlTopology::new(25, 40, 10).unwrap();
        assert_eq!(server_sigma(&t40, 1.0, 100, 2.0, 4.8448), 0.0);
        let t50 = FlTopology::new(25, 50, 10).unwrap();
        assert_eq!(server_sigma(&t50, 1.0, 100, 2.0, 4.8448), 0.0);
        let t60 = FlTopology::new(25, 60, 10).unwrap();
        assert!((server_sigma(&t60, 1.0, 100, 2.0, 4.8448) - 0.064276).abs() < 1e-5);
    }

    #[test]
    fn validation_rules() {
        assert!(PerturbationSpec::gaussian(0.0, 1e-5, 1.0, 10).validate().is_err());
        assert!(PerturbationSpec::gaussian(1.0, 1e-5, 0.0, 10).validate().is_err());
        assert!(PerturbationSpec::laplace(1.0, 1.0, 0).validate().is_err());
        assert!(PerturbationSpec::random(NoiseKind::Laplace, -1.0, 1.0).validate().is_err());
        assert!(PerturbationSpec::gaussian(5.0, 1e-5, 1.0, 10).is_extended_range());
        assert!(FlTopology::new(0, 1, 1).is_err());
    }
}
