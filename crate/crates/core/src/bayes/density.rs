use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::prior::PriorSpec;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, MaternKernel, DEFAULT_JITTER};
use crate::linalg::Cholesky;
use crate::model::{eval_points, SharedModel};

/// Physical data and computer model for the Bayesian analysis.
#[derive(Clone)]
pub struct BayesData {
    pub design: Design,
    pub yp: DVector<f64>,
    pub model: SharedModel,
    /// Smoothness of the discrepancy kernel; the scale is sampled.
    pub upsilon: f64,
    pub jitter: f64,
}

impl BayesData {
    pub fn new(design: Design, yp: DVector<f64>, model: SharedModel, upsilon: f64) -> Result<Self> {
        if yp.len() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                found: yp.len(),
            });
        }
        MaternKernel::new(upsilon, 1.0, design.dim())?;
        Ok(BayesData {
            design,
            yp,
            model,
            upsilon,
            jitter: DEFAULT_JITTER,
        })
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    pub fn kernel(&self, gamma: f64) -> Result<MaternKernel> {
        MaternKernel::new(self.upsilon, gamma, self.design.dim())
    }

    pub fn gram(&self, gamma: f64) -> Result<GramMatrix> {
        gram(&self.design, &self.kernel(gamma)?, self.jitter)
    }

    /// `y^p - y^s(x, theta)`.
    pub fn residuals(&self, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.yp - eval_points(self.model.as_ref(), self.design.points(), theta)?)
    }
}

/// Hyperparameters and calibration parameter of one posterior state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub theta: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub gamma: f64,
}

/// A log density, with support violations reported as a flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDensity {
    Value(f64),
    OutOfSupport,
}

impl LogDensity {
    /// The value, with `-inf` outside the support.
    pub fn value(self) -> f64 {
        match self {
            LogDensity::Value(v) => v,
            LogDensity::OutOfSupport => f64::NEG_INFINITY,
        }
    }

    pub fn in_support(self) -> bool {
        matches!(self, LogDensity::Value(_))
    }
}

/// Assembles the log of the unnormalized cheap-code posterior from its parts.
pub(crate) fn cheap_from_parts(
    n: usize,
    sigma2: f64,
    tau2: f64,
    misfit_sq: f64,
    delta_quad: f64,
    log_det: f64,
    log_prior: f64,
) -> f64 {
    let half_n = 0.5 * n as f64;
    -misfit_sq / (2.0 * sigma2) - half_n * sigma2.ln() - delta_quad / (2.0 * tau2) - half_n * tau2.ln()
        - 0.5 * log_det
        + log_prior
}

/// `log pi(theta, delta(x), tau^2, sigma^2, gamma | y^p)` up to a constant.
pub fn log_posterior_cheap(
    state: &ParamState,
    delta: &DVector<f64>,
    data: &BayesData,
    prior: &PriorSpec,
) -> Result<LogDensity> {
    if delta.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: delta.len(),
        });
    }
    let Some(log_prior) = prior.log_density(&state.theta, state.tau2, state.sigma2, state.gamma) else {
        return Ok(LogDensity::OutOfSupport);
    };
    let r = data.residuals(&state.theta)?;
    let g = data.gram(state.gamma)?;
    let misfit = (&r - delta).norm_squared();
    Ok(LogDensity::Value(cheap_from_parts(
        data.n(),
        state.sigma2,
        state.tau2,
        misfit,
        g.inv_quad_form(delta.as_slice()),
        g.log_det(),
        log_prior,
    )))
}

/// `-1/2 log det Sigma - r^T Sigma^{-1} r / (2 tau^2) - (n/2) log tau^2 + log prior`.
pub fn log_posterior_noiseless(
    theta: &[f64],
    tau2: f64,
    gamma: f64,
    data: &BayesData,
    prior: &PriorSpec,
) -> Result<LogDensity> {
    let Some(log_prior) = prior.log_density_without_sigma2(theta, tau2, gamma) else {
        return Ok(LogDensity::OutOfSupport);
    };
    let r = data.residuals(theta)?;
    let g = data.gram(gamma)?;
    let half_n = 0.5 * data.n() as f64;
    Ok(LogDensity::Value(
        -0.5 * g.log_det() - g.inv_quad_form(r.as_slice()) / (2.0 * tau2) - half_n * tau2.ln() + log_prior,
    ))
}

/// `N(mean, cov)` conditional distribution of `delta(x)`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianConditional {
    /// Log density at `v`, using a symmetric eigendecomposition so singular
    /// directions are handled by restriction to the support.
    pub fn log_density(&self, v: &DVector<f64>) -> f64 {
        let eig = self.cov.clone().symmetric_eigen();
        let d = v - &self.mean;
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let mut quad = 0.0;
        let mut log_det = 0.0;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-14 * scale {
                let proj = eig.eigenvectors.column(i).dot(&d);
                quad += proj * proj / l;
                log_det += l.ln();
            }
        }
        -0.5 * quad - 0.5 * log_det - 0.5 * self.mean.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Conditional of `delta(x)` given everything else:
/// `A = (Sigma^{-1}/tau^2 + I/sigma^2)^{-1}`, mean `A r / sigma^2`, evaluated as
/// `mean = tau^2 Sigma M^{-1} r` and `A = tau^2 Sigma - tau^2 Sigma M^{-1} tau^2 Sigma`
/// with `M = tau^2 Sigma + sigma^2 I`.
pub fn gibbs_delta(state: &ParamState, data: &BayesData) -> Result<GaussianConditional> {
    if !(state.sigma2 > 0.0 && state.tau2 > 0.0) {
        return Err(Error::invalid("gibbs_delta needs sigma2 > 0 and tau2 > 0"));
    }
    let r = data.residuals(&state.theta)?;
    let g = data.gram(state.gamma)?;
    conditional_from(&r, &g, state.tau2, state.sigma2)
}

pub(crate) fn conditional_from(r: &DVector<f64>, g: &GramMatrix, tau2: f64, sigma2: f64) -> Result<GaussianConditional> {
    let k = g.entries() * tau2;
    let mut m = k.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += sigma2;
    }
    let mf = Cholesky::factor(&m, sigma2)?;
    let mean = &k * mf.solve(r);
    let mut m_inv_k = k.clone();
    for mut col in m_inv_k.column_iter_mut() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        mf.solve_in_place(&mut v);
        col.copy_from_slice(&v);
    }
    let mut cov = &k - &k * m_inv_k;
    let sym = 0.5 * (&cov + cov.transpose());
    cov = sym;
    Ok(GaussianConditional { mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{Domain, PointSet};
    use crate::model::{shared, FnModel};

    pub(crate) fn far_data(n: usize) -> BayesData {
        // Points far apart relative to the kernel scale give Sigma = I.
        let xs: Vec<f64> = (0..n).map(|i| 100.0 * i as f64).collect();
        let design = Design::new(
            PointSet::from_scalars(&xs).unwrap(),
            Domain::new(vec![(0.0, 100.0 * n as f64)]).unwrap(),
        )
        .unwrap();
        let yp = DVector::from_iterator(n, (0..n).map(|i| 1.0 + i as f64));
        let mut d = BayesData::new(design, yp, shared(FnModel::new("zero", |_: &[f64], _: &[f64]| 0.0)), 0.5).unwrap();
        d.jitter = 0.0;
        d
    }

    #[test]
    fn identity_gram_conditional() {
        let data = far_data(3);
        let s = ParamState {
            theta: vec![0.0],
            tau2: 1.0,
            sigma2: 1.0,
            gamma: 1.0,
        };
        let c = gibbs_delta(&s, &data).unwrap();
        for i in 0..3 {
            assert!((c.mean[i] - data.yp[i] / 2.0).abs() < 1e-12);
            for j in 0..3 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((c.cov[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn limits_of_conditional() {
        let data = far_data(2);
        let tiny_tau = ParamState {
            theta: vec![0.0],
            tau2: 1e-12,
            sigma2: 1.0,
            gamma: 1.0,
        };
        let c = gibbs_delta(&tiny_tau, &data).unwrap();
        assert!(c.mean.amax() < 1e-10 && c.cov.amax() < 1e-10);
        let tiny_sigma = ParamState {
            sigma2: 1e-12,
            tau2: 1.0,
            ..tiny_tau
        };
        let c = gibbs_delta(&tiny_sigma, &data).unwrap();
        assert!((c.mean - &data.yp).amax() < 1e-10);
    }

    #[test]
    fn exact_fit_has_zero_misfit_term() {
        let data = far_data(2);
        let prior = PriorSpec::default_for(Domain::unit(1), data.yp.as_slice());
        let s = ParamState {
            theta: vec![0.5],
            tau2: 1.0,
            sigma2: 1.0,
            gamma: 1.0,
        };
        let lp = log_posterior_cheap(&s, &data.yp, &data, &prior).unwrap().value();
        let log_prior = prior.log_density(&s.theta, 1.0, 1.0, 1.0).unwrap();
        // only the GP term remains: -|y|^2/2
        assert!((lp - (log_prior - 0.5 * data.yp.norm_squared())).abs() < 1e-12);
        let out = ParamState { tau2: -1.0, ..s };
        assert_eq!(log_posterior_cheap(&out, &data.yp, &data, &prior).unwrap(), LogDensity::OutOfSupport);
    }
}
