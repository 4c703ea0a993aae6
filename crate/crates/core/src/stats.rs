//! Small statistics helpers: normal quantiles and running moments.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided normal critical value for confidence `level`, e.g. 2.5758 at 0.99.
pub fn z_two_sided(level: f64) -> f64 {
    standard_normal().inverse_cdf(0.5 + 0.5 * level)
}

/// One-sided normal critical value for confidence `level`, e.g. 2.3263 at 0.99.
pub fn z_one_sided(level: f64) -> f64 {
    standard_normal().inverse_cdf(level)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Running) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; NaN below two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::new();
        for x in iter {
            r.push(x);
        }
        r
    }
}

/// Normal-approximation half-width of a binomial proportion at `level`.
pub fn binomial_halfwidth(successes: u64, n: u64, level: f64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let p = successes as f64 / n as f64;
    z_two_sided(level) * (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((z_two_sided(0.99) - 2.575_829_303_548_9).abs() < 1e-9);
        assert!((z_one_sided(0.99) - 2.326_347_874_040_8).abs() < 1e-9);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole: Running = xs.iter().copied().collect();
        let mut left: Running = xs[..400].iter().copied().collect();
        let right: Running = xs[400..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        assert!((left.mean() - whole.mean()).abs() < 1e-12);
        assert!((left.variance() - whole.variance()).abs() < 1e-9);
    }
}
