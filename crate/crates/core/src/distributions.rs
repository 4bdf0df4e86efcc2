//! Reaction-time and deceleration distributions used by both the analytic
//! reference measure and the Monte Carlo ego model.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

pub fn std_normal_quantile(p: f64) -> f64 {
    // statrs only fails on invalid parameters, never for (0, 1).
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}

/// Log-normal distribution specified by the mean and standard deviation of
/// the variable itself (not of its logarithm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMoments {
    pub mean: f64,
    pub std: f64,
}

impl LogNormalMoments {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && std > 0.0) {
            return Err(invalid("log-normal mean and std must be positive"));
        }
        Ok(Self { mean, std })
    }

    /// `(mu, sigma)` of the underlying normal.
    pub fn log_params(&self) -> (f64, f64) {
        let cv = self.std / self.mean;
        let s2 = (1.0 + cv * cv).ln();
        (self.mean.ln() - 0.5 * s2, s2.sqrt())
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (mu, sigma) = self.log_params();
        std_normal_pdf((t.ln() - mu) / sigma) / (t * sigma)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (mu, sigma) = self.log_params();
        std_normal_cdf((t.ln() - mu) / sigma)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (mu, sigma) = self.log_params();
        let z: f64 = rng.sample(StandardNormal);
        (mu + sigma * z).exp()
    }
}

/// Normal distribution truncated to `[lower, upper]`; either bound may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(std > 0.0) || !(lower < upper) || mean.is_nan() {
            return Err(invalid("truncated normal needs std > 0 and lower < upper"));
        }
        Ok(Self {
            mean,
            std,
            lower,
            upper,
        })
    }

    fn alpha_beta(&self) -> (f64, f64) {
        (
            (self.lower - self.mean) / self.std,
            (self.upper - self.mean) / self.std,
        )
    }

    fn mass(&self) -> f64 {
        let (a, b) = self.alpha_beta();
        std_normal_cdf(b) - std_normal_cdf(a)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        std_normal_pdf((x - self.mean) / self.std) / (self.std * self.mass())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let (a, _) = self.alpha_beta();
        (std_normal_cdf((x - self.mean) / self.std) - std_normal_cdf(a)) / self.mass()
    }

    /// Closed-form mean of the truncated distribution.
    pub fn truncated_mean(&self) -> f64 {
        let (a, b) = self.alpha_beta();
        let pa = if a.is_finite() {
            std_normal_pdf(a)
        } else {
            0.0
        };
        let pb = if b.is_finite() {
            std_normal_pdf(b)
        } else {
            0.0
        };
        self.mean + self.std * (pa - pb) / self.mass()
    }

    /// Inverse-CDF draw on the truncated interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.alpha_beta();
        let (lo, hi) = (std_normal_cdf(a), std_normal_cdf(b));
        let u: f64 = rng.sample(Open01);
        let x = self.mean + self.std * std_normal_quantile(lo + u * (hi - lo));
        x.clamp(self.lower, self.upper)
    }
}
