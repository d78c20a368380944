//! Noise distributions drawn from [`RngState`].

use std::f64::consts::TAU;

use crate::error::{param_err, Result};
use crate::numeric::{FlatTensor, RngState};

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return param_err("sample count must be at least 1");
    }
    Ok(())
}

/// Fills `out` with N(0, sigma^2) draws using Box-Muller on pairs of uniforms.
pub(crate) fn fill_gaussian(rng: &mut RngState, sigma: f64, out: &mut [f32]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng);
        pair[0] = (a * sigma) as f32;
        pair[1] = (b * sigma) as f32;
    }
    if let [last] = chunks.into_remainder() {
        *last = (box_muller(rng).0 * sigma) as f32;
    }
}

fn box_muller(rng: &mut RngState) -> (f64, f64) {
    let u1 = rng.next_open_f64();
    let u2 = rng.next_f64();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Fills `out` with Laplace(0, b) draws by inverting the CDF.
pub(crate) fn fill_laplace(rng: &mut RngState, b: f64, out: &mut [f32]) {
    for v in out {
        let u = rng.next_open_f64() - 0.5;
        *v = (-b * u.signum() * (1.0 - 2.0 * u.abs()).ln()) as f32;
    }
}

/// `n` i.i.d. draws from N(0, sigma^2).
pub fn sample_gaussian(rng: &mut RngState, sigma: f64, n: usize) -> Result<FlatTensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return param_err(format!("gaussian sigma must be finite and >= 0, got {sigma}"));
    }
    check_count(n)?;
    let mut data = vec![0.0f32; n];
    fill_gaussian(rng, sigma, &mut data);
    Ok(FlatTensor::from_parts_unchecked(vec![n], data))
}

/// `n` i.i.d. draws from Laplace(0, b); variance is `2 b^2`.
pub fn sample_laplace(rng: &mut RngState, b: f64, n: usize) -> Result<FlatTensor> {
    if !(b >= 0.0) || !b.is_finite() {
        return param_err(format!("laplace scale must be finite and >= 0, got {b}"));
    }
    check_count(n)?;
    let mut data = vec![0.0f32; n];
    fill_laplace(rng, b, &mut data);
    Ok(FlatTensor::from_parts_unchecked(vec![n], data))
}

/// `n` i.i.d. draws from U(lo, hi).
pub fn sample_uniform(rng: &mut RngState, lo: f64, hi: f64, n: usize) -> Result<FlatTensor> {
    if !(lo <= hi) {
        return param_err(format!("uniform bounds out of order: {lo} > {hi}"));
    }
    check_count(n)?;
    let data = (0..n)
        .map(|_| (lo + (hi - lo) * rng.next_f64()) as f32)
        .collect();
    Ok(FlatTensor::from_parts_unchecked(vec![n], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(v: &[f32]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let var = v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn zero_scale_is_zero() {
        let g = sample_gaussian(&mut RngState::new(1), 0.0, 5).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let l = sample_laplace(&mut RngState::new(1), 0.0, 3).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(sample_gaussian(&mut RngState::new(1), -1.0, 5).is_err());
        assert!(sample_laplace(&mut RngState::new(1), -0.5, 5).is_err());
        assert!(sample_gaussian(&mut RngState::new(1), 1.0, 0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let g = sample_gaussian(&mut RngState::new(11), 1.0, 100_000).unwrap();
        let (m, v) = moments(g.data());
        assert!(m.abs() <= 0.02, "mean {m}");
        assert!((0.98..=1.02).contains(&v), "var {v}");
    }

    #[test]
    fn laplace_variance_is_two_b_squared() {
        let l = sample_laplace(&mut RngState::new(12), 1.0, 100_000).unwrap();
        let (_, v) = moments(l.data());
        assert!((1.9..=2.1).contains(&v), "var {v}");
    }

    #[test]
    fn draws_are_deterministic() {
        let a = sample_gaussian(&mut RngState::new(5), 0.3, 17).unwrap();
        let b = sample_gaussian(&mut RngState::new(5), 0.3, 17).unwrap();
        assert_eq!(a, b);
        let a = sample_laplace(&mut RngState::new(5), 0.3, 17).unwrap();
        let b = sample_laplace(&mut RngState::new(5), 0.3, 17).unwrap();
        assert_eq!(a, b);
    }
}
