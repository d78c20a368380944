//! Similarity metrics in `f64`.

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `10 log10(peak^2 / mse)`, capped at 100.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let e = mse(a, b);
    if e == 0.0 {
        100.0
    } else {
        (10.0 * (peak * peak / e).log10()).min(100.0)
    }
}

/// `max - min`.
pub fn range(a: &[f64]) -> f64 {
    let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}
