use serde::{Deserialize, Serialize};

/// Running list of `(epsilon, delta)` charges under simple composition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAccountant {
    entries: Vec<(f64, f64)>,
}

impl PrivacyAccountant {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, epsilon: f64, delta: f64) {
        self.entries.push((epsilon, delta));
    }

    pub fn merge(&mut self, other: &PrivacyAccountant) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(sum epsilon_i, sum delta_i)`.
    pub fn compose(&self) -> (f64, f64) {
        compose(self)
    }
}

/// Simple composition: budgets add.
///
/// Both sums are correctly rounded, so the result does not depend on the
/// order in which charges were recorded.
pub fn compose(acct: &PrivacyAccountant) -> (f64, f64) {
    let eps = exact_sum(acct.entries.iter().map(|e| e.0));
    let delta = exact_sum(acct.entries.iter().map(|e| e.1));
    (eps, delta)
}

/// Correctly rounded floating-point sum (Shewchuk's non-overlapping partials).
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials (largest last) to a single value, handling the
    // half-way case the way Python's math.fsum does.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
