//! Streaming moments, Gaussian tails and the Kolmogorov–Smirnov distance.

/// Mean and centred second moment, mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        Moments {
            count: n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        libm::sqrt(self.variance() / self.count as f64)
    }
}

/// Running `log Σ exp(v_i)` kept as `max + log(scaled)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    pub count: u64,
    pub max: f64,
    pub scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { count: 0, max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * libm::exp(self.max - v) + 1.0;
            self.max = v;
        } else {
            self.scaled += libm::exp(v - self.max);
        }
    }

    pub fn merge(self, other: LogSumExp) -> LogSumExp {
        let count = self.count + other.count;
        if other.max == f64::NEG_INFINITY {
            return LogSumExp { count, ..self };
        }
        if self.max == f64::NEG_INFINITY {
            return LogSumExp { count, ..other };
        }
        let max = self.max.max(other.max);
        let scaled = self.scaled * libm::exp(self.max - max) + other.scaled * libm::exp(other.max - max);
        LogSumExp { count, max, scaled }
    }

    /// `log( (1/n) Σ exp(v_i) )`, or `None` when every term was `-inf`.
    pub fn log_mean(&self) -> Option<f64> {
        if self.count == 0 || self.max == f64::NEG_INFINITY {
            return None;
        }
        Some(self.max + libm::log(self.scaled / self.count as f64))
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// CDF of `|N(0, variance)|`.
pub fn half_normal_cdf(x: f64, variance: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    libm::erf(x / libm::sqrt(2.0 * variance))
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical law of
/// `samples` and a continuous `cdf`. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d.max(lo).max(hi)
    })
}

/// Asymptotic critical value `sqrt(-ln(α/2)/2) / sqrt(n)` of the KS distance.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    libm::sqrt(-0.5 * libm::log(alpha / 2.0)) / libm::sqrt(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| libm::sin(i as f64) * 3.0 + 1.0).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        let m = a.merge(b);
        assert_eq!(m.count, 100);
        assert!((m.mean - all.mean).abs() < 1e-13);
        assert!((m.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let mut acc = LogSumExp::default();
        for v in [-1000.0, -1001.0, -1000.5] {
            acc.push(v);
        }
        let direct = -1000.0 + libm::log((1.0 + libm::exp(-1.0) + libm::exp(-0.5)) / 3.0);
        assert!((acc.log_mean().unwrap() - direct).abs() < 1e-12);

        let mut a = LogSumExp::default();
        a.push(-1000.0);
        let mut b = LogSumExp::default();
        b.push(-1001.0);
        b.push(-1000.5);
        assert!((a.merge(b).log_mean().unwrap() - direct).abs() < 1e-12);

        let mut empty = LogSumExp::default();
        empty.push(f64::NEG_INFINITY);
        assert_eq!(empty.log_mean(), None);
    }

    #[test]
    fn gaussian_tail_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // Φ̄(3.1623) ≈ 7.83e-4
        let p = normal_sf(1.0 / libm::sqrt(0.1));
        assert!((p - 7.827e-4).abs() < 1e-6, "{p}");
        assert!((half_normal_cdf(1.0, 1.0) - 0.682_689_492).abs() < 1e-8);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!((ks_critical_value(100_000, 0.01) - 0.005_147).abs() < 1e-5);
    }
}
