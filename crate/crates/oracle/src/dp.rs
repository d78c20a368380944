//! Noise calibration restated from the closed forms.

/// Laplace parameter `b = 2C / (m epsilon)`.
pub fn laplace_b(clip: f64, m: u64, epsilon: f64) -> f64 {
    2.0 * clip / (m as f64 * epsilon)
}

/// Gaussian standard deviation `2C sqrt(2 ln(1.25/delta)) / (m epsilon)`.
pub fn gaussian_sigma(clip: f64, m: u64, epsilon: f64, delta: f64) -> f64 {
    let c = (2.0 * (1.25f64 / delta).ln()).sqrt();
    2.0 * clip * c / (m as f64 * epsilon)
}

/// Server-side standard deviation; zero when `T <= L sqrt(N)`.
pub fn server_sigma(
    clients: u64,
    rounds: u64,
    exposures: u64,
    clip: f64,
    m: u64,
    epsilon: f64,
    delta: f64,
) -> f64 {
    let (n, t, l) = (clients as i128, rounds as i128, exposures as i128);
    let gap = t * t - l * l * n;
    if gap <= 0 {
        return 0.0;
    }
    let c = (2.0 * (1.25f64 / delta).ln()).sqrt();
    c * 2.0 * clip * (gap as f64).sqrt() / (m as f64 * clients as f64 * epsilon)
}
