//! Noise-schedule quantities by direct products and Gaussian conditioning.

/// `beta_t` for `t` in `1..=steps` on a linear schedule.
pub fn linear_beta(t: usize, steps: usize, start: f64, end: f64) -> f64 {
    if steps == 1 {
        return start;
    }
    start + (end - start) * (t - 1) as f64 / (steps - 1) as f64
}

/// `prod_{s <= t} (1 - beta_s)`, recomputed from scratch.
pub fn gamma(t: usize, steps: usize, start: f64, end: f64) -> f64 {
    (1..=t).map(|s| 1.0 - linear_beta(s, steps, start, end)).product()
}

/// Smallest `t` with `gamma_t <= 1/(1 + m^2)`, walking the product; `steps`
/// if none.
pub fn start_step(m: f64, steps: usize, start: f64, end: f64) -> usize {
    let target = 1.0 / (1.0 + m * m);
    let mut g = 1.0;
    if g <= target {
        return 0;
    }
    for t in 1..=steps {
        g *= 1.0 - linear_beta(t, steps, start, end);
        if g <= target {
            return t;
        }
    }
    steps
}

/// Conditions a bivariate Gaussian on its second coordinate: returns the
/// conditional mean's intercept and slope in the observed value, and the
/// conditional variance of the first coordinate.
pub fn condition_first_on_second(mean: [f64; 2], cov: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let slope = cov[0][1] / cov[1][1];
    let intercept = mean[0] - slope * mean[1];
    let var = cov[0][0] - cov[0][1] * cov[1][0] / cov[1][1];
    (intercept, slope, var)
}

/// Posterior `q(x_{t-1} | x_t, x_0)` as `(coef_x0, coef_xt, variance)`,
/// derived from the joint law of `(x_{t-1}, x_t)` given `x_0`:
/// `x_{t-1} = sqrt(gamma_prev) x0 + sqrt(1 - gamma_prev) e1` and
/// `x_t = sqrt(alpha) x_{t-1} + sqrt(1 - alpha) e2`.
pub fn posterior(alpha: f64, gamma_prev: f64) -> (f64, f64, f64) {
    let v1 = 1.0 - gamma_prev;
    let cov = [[v1, alpha.sqrt() * v1], [alpha.sqrt() * v1, alpha * v1 + (1.0 - alpha)]];
    // Unit x0: the means are the x0 coefficients.
    let mean = [gamma_prev.sqrt(), (alpha * gamma_prev).sqrt()];
    let (intercept, slope, var) = condition_first_on_second(mean, cov);
    (intercept, slope, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_mean_reproduces_forward_marginal() {
        // E[x_{t-1}] = sqrt(gamma_prev) x0 must equal the posterior mean
        // averaged over x_t ~ N(sqrt(gamma_t) x0, 1 - gamma_t).
        let (a, gp) = (0.97, 0.6);
        let (c0, ct, var) = posterior(a, gp);
        assert!((c0 + ct * (a * gp).sqrt() - gp.sqrt()).abs() < 1e-15);
        assert!(var > 0.0 && var < 1.0 - a + 1e-15);
    }

    #[test]
    fn start_step_by_walking() {
        assert_eq!(start_step(0.0, 1000, 1e-4, 0.02), 0);
        assert_eq!(start_step(0.1, 1000, 1e-4, 0.02), 28);
    }
}
