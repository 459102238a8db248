use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::Domain;
use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`; a single point when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::invalid(format!("[{lo}, {hi}] is not a nonempty interval")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Log density of the uniform distribution on the interval; 0 for a point mass.
    pub fn log_uniform(&self) -> f64 {
        if self.is_point() {
            0.0
        } else {
            -self.width().ln()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_point() {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sigma2Prior {
    /// `pi(sigma^2) ∝ 1` on `(0, inf)`.
    Flat,
    Uniform(Interval),
}

/// Separable prior: uniform on the parameter box, on `(0, tau0^2]` (or a
/// sub-interval), on `[gamma_1, gamma_2]`, and flat or uniform for `sigma^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub theta: Domain,
    pub tau2: Interval,
    pub sigma2: Sigma2Prior,
    pub gamma: Interval,
}

impl PriorSpec {
    pub fn new(theta: Domain, tau2: Interval, sigma2: Sigma2Prior, gamma: Interval) -> Result<Self> {
        if tau2.hi <= 0.0 || tau2.lo < 0.0 {
            return Err(Error::invalid("tau2 support must lie in (0, inf)"));
        }
        if gamma.lo <= 0.0 {
            return Err(Error::invalid("gamma support must lie in (0, inf)"));
        }
        if let Sigma2Prior::Uniform(s) = sigma2 {
            if s.hi <= 0.0 || s.lo < 0.0 {
                return Err(Error::invalid("sigma2 support must lie in (0, inf)"));
            }
        }
        Ok(PriorSpec {
            theta,
            tau2,
            sigma2,
            gamma,
        })
    }

    /// `tau0^2 = 100 var(y^p)` (1 when the data are constant), flat `sigma^2`,
    /// `gamma in [0.1, 10]`.
    pub fn default_for(theta: Domain, yp: &[f64]) -> Self {
        let n = yp.len().max(1) as f64;
        let mean = yp.iter().sum::<f64>() / n;
        let var = yp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let tau0 = if var > 0.0 { 100.0 * var } else { 1.0 };
        PriorSpec {
            theta,
            tau2: Interval { lo: 0.0, hi: tau0 },
            sigma2: Sigma2Prior::Flat,
            gamma: Interval { lo: 0.1, hi: 10.0 },
        }
    }

    pub fn tau2_in_support(&self, tau2: f64) -> bool {
        tau2 > 0.0 && self.tau2.contains(tau2)
    }

    pub fn sigma2_in_support(&self, sigma2: f64) -> bool {
        match self.sigma2 {
            Sigma2Prior::Flat => sigma2 > 0.0 && sigma2.is_finite(),
            Sigma2Prior::Uniform(s) => sigma2 > 0.0 && s.contains(sigma2),
        }
    }

    pub fn sigma2_fixed(&self) -> bool {
        matches!(self.sigma2, Sigma2Prior::Uniform(s) if s.is_point())
    }

    pub fn theta_fixed(&self) -> bool {
        self.theta.bounds().iter().all(|(lo, hi)| lo == hi)
    }

    fn log_theta(&self) -> f64 {
        self.theta
            .bounds()
            .iter()
            .map(|&(lo, hi)| if hi > lo { -(hi - lo).ln() } else { 0.0 })
            .sum()
    }

    fn log_sigma2(&self) -> f64 {
        match self.sigma2 {
            Sigma2Prior::Flat => 0.0,
            Sigma2Prior::Uniform(s) => s.log_uniform(),
        }
    }

    /// Log prior of `(theta, tau2, gamma)`, or `None` outside the support.
    pub fn log_density_without_sigma2(&self, theta: &[f64], tau2: f64, gamma: f64) -> Option<f64> {
        if !self.theta.contains(theta) || !self.tau2_in_support(tau2) || !self.gamma.contains(gamma) {
            return None;
        }
        Some(self.log_theta() + self.tau2.log_uniform() + self.gamma.log_uniform())
    }

    /// Full log prior, or `None` outside the support.
    pub fn log_density(&self, theta: &[f64], tau2: f64, sigma2: f64, gamma: f64) -> Option<f64> {
        if !self.sigma2_in_support(sigma2) {
            return None;
        }
        Some(self.log_density_without_sigma2(theta, tau2, gamma)? + self.log_sigma2())
    }
}
