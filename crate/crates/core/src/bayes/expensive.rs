//! Joint Gaussian of physical data and simulator runs when the simulator is
//! modelled by a GP surrogate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::PointSet;
use crate::error::{Error, Result};
use crate::kernel::{MaternKernel, DEFAULT_JITTER};
use crate::linalg::Cholesky;

/// Prior mean `m_beta(x)` of the simulator surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanFunction {
    Constant { beta0: f64 },
    /// `beta0 + beta . x`
    Linear { beta0: f64, beta: Vec<f64> },
}

impl MeanFunction {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            MeanFunction::Constant { beta0 } => Ok(*beta0),
            MeanFunction::Linear { beta0, beta } => {
                if beta.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        found: beta.len(),
                    });
                }
                Ok(beta0 + beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            }
        }
    }
}

/// Hyperparameters of the surrogate (`tau'^2`, `C'` on `(x, theta)`) and of the discrepancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHyper {
    pub mean: MeanFunction,
    /// `tau'^2`.
    pub tau2_sim: f64,
    /// Kernel on the joint `(x, theta)` space, dimension `d + p`.
    pub sim_kernel: MaternKernel,
    pub tau2: f64,
    /// Discrepancy kernel on `x`, dimension `d`.
    pub kernel: MaternKernel,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct JointGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Number of physical observations; the first block.
    pub n: usize,
    pub jitter: f64,
}

impl JointGaussian {
    /// Log density of the stacked observations `(y^p, y^s)`.
    pub fn log_density(&self, yp: &[f64], ys: &[f64]) -> Result<f64> {
        let m = self.mean.len();
        if yp.len() != self.n || yp.len() + ys.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: yp.len() + ys.len(),
            });
        }
        let mut a = self.cov.clone();
        for i in 0..m {
            a[(i, i)] += self.jitter;
        }
        let f = Cholesky::factor(&a, self.jitter)?;
        let y = DVector::from_iterator(m, yp.iter().chain(ys).copied());
        let d = y - &self.mean;
        Ok(-0.5 * f.inv_quad_form(d.as_slice())
            - 0.5 * f.log_det()
            - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// `N(m_beta(x^E), Sigma_E + blockdiag(Sigma_11 + sigma^2 I_n, 0))` with
/// `x^E = (x_1..x_n, x^s_1..x^s_l)` and `theta^E = (theta0,..,theta0, theta^s_1..theta^s_l)`.
pub fn assemble_joint_expensive(
    phys: &PointSet,
    sim_x: &PointSet,
    sim_theta: &PointSet,
    theta0: &[f64],
    hyper: &SurrogateHyper,
) -> Result<JointGaussian> {
    let d = phys.dim();
    let p = theta0.len();
    if sim_x.len() != sim_theta.len() {
        return Err(Error::DimensionMismatch {
            expected: sim_x.len(),
            found: sim_theta.len(),
        });
    }
    if sim_x.dim() != d || (!sim_theta.is_empty() && sim_theta.dim() != p) {
        return Err(Error::invalid("simulator inputs do not match the physical and parameter dimensions"));
    }
    if hyper.sim_kernel.dim() != d + p || hyper.kernel.dim() != d {
        return Err(Error::invalid("kernel dimensions do not match the inputs"));
    }
    if hyper.tau2_sim < 0.0 || hyper.tau2 < 0.0 || hyper.sigma2 < 0.0 {
        return Err(Error::invalid("variances must be nonnegative"));
    }
    let n = phys.len();
    let m = n + sim_x.len();
    let mut aug = Vec::with_capacity(m);
    for i in 0..n {
        let mut v = phys.point(i).to_vec();
        v.extend_from_slice(theta0);
        aug.push(v);
    }
    for j in 0..sim_x.len() {
        let mut v = sim_x.point(j).to_vec();
        v.extend_from_slice(sim_theta.point(j));
        aug.push(v);
    }
    let mean = DVector::from_iterator(
        m,
        aug.iter().map(|v| hyper.mean.eval(&v[..d])).collect::<Result<Vec<f64>>>()?,
    );
    let mut cov = DMatrix::from_fn(m, m, |i, j| hyper.tau2_sim * hyper.sim_kernel.eval_unchecked(&aug[i], &aug[j]));
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] += hyper.tau2 * hyper.kernel.eval_unchecked(phys.point(i), phys.point(j));
        }
        cov[(i, i)] += hyper.sigma2;
    }
    Ok(JointGaussian {
        mean,
        cov,
        n,
        jitter: DEFAULT_JITTER,
    })
}
