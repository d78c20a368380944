//! Reference distributions and goodness of fit.

use statrs::distribution::{ContinuousCDF, Laplace, Normal};

pub fn normal_cdf(sigma: f64) -> impl Fn(f64) -> f64 {
    let d = Normal::new(0.0, sigma).expect("sigma > 0");
    move |x| d.cdf(x)
}

pub fn laplace_cdf(b: f64) -> impl Fn(f64) -> f64 {
    let d = Laplace::new(0.0, b).expect("b > 0");
    move |x| d.cdf(x)
}

/// Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value of the KS statistic at level `alpha` for large `n`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
