//! Built-in synthetic calibration problems.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{Domain, PointSet};
use crate::error::{Error, Result};
use crate::kernel::MaternKernel;
use crate::model::{shared, FnModel, SharedModel};
use crate::native::NativeElement;

/// True-process evaluator.
pub type Zeta = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Named, fully parameterized problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `zeta = sum_k a_k C(z_k, .)`, `y^s(x, theta) = theta g(x)` with
    /// `g = sum_k b_k C(w_k, .)`. Both lie in the native space of the kernel
    /// `(upsilon, gamma)`, i.e. in `H^{upsilon + d/2}`.
    KernelTranslate {
        dim: usize,
        upsilon: f64,
        gamma: f64,
        zeta_centers: Vec<Vec<f64>>,
        zeta_weights: Vec<f64>,
        g_centers: Vec<Vec<f64>>,
        g_weights: Vec<f64>,
        theta_lo: f64,
        theta_hi: f64,
        sigma0_sq: f64,
    },
    /// Analytic `zeta = sum_k sin(2 pi x_k) + b cos(pi x_k)` and the biased
    /// simplification `y^s = theta sum_k sin(2 pi x_k)`. `zeta` is smooth, so
    /// it lies in every `H^s`.
    Trig {
        dim: usize,
        bias: f64,
        theta_lo: f64,
        theta_hi: f64,
        sigma0_sq: f64,
    },
    /// `y^s(x, theta) = zeta(x) + (theta - theta0) sum_k x_k` with the trig
    /// `zeta`: the model is exact at `theta0`.
    Perfect {
        dim: usize,
        bias: f64,
        theta0: f64,
        theta_lo: f64,
        theta_hi: f64,
        sigma0_sq: f64,
    },
    /// `y^s(x, theta) = theta . x` (one parameter per input) against the trig `zeta`.
    Dot {
        dim: usize,
        bias: f64,
        theta_lo: f64,
        theta_hi: f64,
        sigma0_sq: f64,
    },
}

fn default_centers(base: &[f64], dim: usize) -> Vec<Vec<f64>> {
    base.iter()
        .map(|&c| (0..dim).map(|j| (c + 0.37 * j as f64).fract()).collect())
        .collect()
}

impl ProblemSpec {
    pub fn kernel_translate(dim: usize, upsilon: f64, gamma: f64) -> Self {
        ProblemSpec::KernelTranslate {
            dim,
            upsilon,
            gamma,
            zeta_centers: default_centers(&[0.15, 0.45, 0.8], dim),
            zeta_weights: vec![1.0, -0.8, 0.6],
            g_centers: default_centers(&[0.3, 0.7], dim),
            g_weights: vec![0.7, 0.5],
            theta_lo: -2.0,
            theta_hi: 2.0,
            sigma0_sq: 0.0,
        }
    }

    pub fn trig(dim: usize) -> Self {
        ProblemSpec::Trig {
            dim,
            bias: 0.4,
            theta_lo: 0.0,
            theta_hi: 2.0,
            sigma0_sq: 0.0,
        }
    }

    pub fn perfect(dim: usize) -> Self {
        ProblemSpec::Perfect {
            dim,
            bias: 0.4,
            theta0: 1.0,
            theta_lo: 0.0,
            theta_hi: 2.0,
            sigma0_sq: 0.0,
        }
    }

    pub fn dot(dim: usize) -> Self {
        ProblemSpec::Dot {
            dim,
            bias: 0.4,
            theta_lo: -2.0,
            theta_hi: 2.0,
            sigma0_sq: 0.0,
        }
    }

    /// Built-in by name with default parameters.
    pub fn by_name(name: &str, dim: usize, upsilon: f64, gamma: f64) -> Result<Self> {
        match name {
            "kernel-translate" => Ok(Self::kernel_translate(dim, upsilon, gamma)),
            "trig" => Ok(Self::trig(dim)),
            "perfect" => Ok(Self::perfect(dim)),
            "dot" => Ok(Self::dot(dim)),
            other => Err(Error::invalid(format!(
                "unknown problem {other:?}; expected kernel-translate, trig, perfect or dot"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::KernelTranslate { .. } => "kernel-translate",
            ProblemSpec::Trig { .. } => "trig",
            ProblemSpec::Perfect { .. } => "perfect",
            ProblemSpec::Dot { .. } => "dot",
        }
    }

    pub fn sigma0_sq(&self) -> f64 {
        match self {
            ProblemSpec::KernelTranslate { sigma0_sq, .. }
            | ProblemSpec::Trig { sigma0_sq, .. }
            | ProblemSpec::Perfect { sigma0_sq, .. }
            | ProblemSpec::Dot { sigma0_sq, .. } => *sigma0_sq,
        }
    }

    pub fn with_sigma0_sq(mut self, value: f64) -> Self {
        match &mut self {
            ProblemSpec::KernelTranslate { sigma0_sq, .. }
            | ProblemSpec::Trig { sigma0_sq, .. }
            | ProblemSpec::Perfect { sigma0_sq, .. }
            | ProblemSpec::Dot { sigma0_sq, .. } => *sigma0_sq = value,
        }
        self
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::KernelTranslate { dim, .. }
            | ProblemSpec::Trig { dim, .. }
            | ProblemSpec::Perfect { dim, .. }
            | ProblemSpec::Dot { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<SyntheticProblem> {
        let sigma0_sq = self.sigma0_sq();
        if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
            return Err(Error::invalid(format!("sigma0_sq must be nonnegative, got {sigma0_sq}")));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("problem dimension must be at least 1"));
        }
        let domain = Domain::unit(d);
        let trig_zeta = |bias: f64| -> Zeta {
            Arc::new(move |x: &[f64]| x.iter().map(|&v| (2.0 * PI * v).sin() + bias * (PI * v).cos()).sum())
        };
        match self {
            ProblemSpec::KernelTranslate {
                upsilon,
                gamma,
                zeta_centers,
                zeta_weights,
                g_centers,
                g_weights,
                theta_lo,
                theta_hi,
                ..
            } => {
                let k = MaternKernel::new(*upsilon, *gamma, d)?;
                let zeta_el = translate_sum(k, zeta_centers, zeta_weights)?;
                let g_el = translate_sum(k, g_centers, g_weights)?;
                let g_model = g_el.clone();
                let zeta_eval = zeta_el.clone();
                Ok(SyntheticProblem {
                    spec: self.clone(),
                    zeta: Arc::new(move |x: &[f64]| zeta_eval.eval_point(x)),
                    model: shared(FnModel::new("kernel-translate", move |x: &[f64], t: &[f64]| {
                        t[0] * g_model.eval_point(x)
                    })),
                    theta_domain: Domain::new(vec![(*theta_lo, *theta_hi)])?,
                    domain,
                    sigma0_sq,
                    native: Some((zeta_el, g_el)),
                })
            }
            ProblemSpec::Trig {
                bias,
                theta_lo,
                theta_hi,
                ..
            } => Ok(SyntheticProblem {
                spec: self.clone(),
                zeta: trig_zeta(*bias),
                model: shared(FnModel::new("trig", |x: &[f64], t: &[f64]| {
                    t[0] * x.iter().map(|&v| (2.0 * PI * v).sin()).sum::<f64>()
                })),
                theta_domain: Domain::new(vec![(*theta_lo, *theta_hi)])?,
                domain,
                sigma0_sq,
                native: None,
            }),
            ProblemSpec::Perfect {
                bias,
                theta0,
                theta_lo,
                theta_hi,
                ..
            } => {
                let zeta = trig_zeta(*bias);
                let inner = zeta.clone();
                let theta0 = *theta0;
                Ok(SyntheticProblem {
                    spec: self.clone(),
                    zeta,
                    model: shared(FnModel::new("perfect", move |x: &[f64], t: &[f64]| {
                        inner(x) + (t[0] - theta0) * x.iter().sum::<f64>()
                    })),
                    theta_domain: Domain::new(vec![(*theta_lo, *theta_hi)])?,
                    domain,
                    sigma0_sq,
                    native: None,
                })
            }
            ProblemSpec::Dot {
                bias,
                theta_lo,
                theta_hi,
                ..
            } => Ok(SyntheticProblem {
                spec: self.clone(),
                zeta: trig_zeta(*bias),
                model: shared(FnModel::new("dot", |x: &[f64], t: &[f64]| {
                    x.iter().zip(t).map(|(a, b)| a * b).sum()
                })),
                theta_domain: Domain::new(vec![(*theta_lo, *theta_hi); d])?,
                domain,
                sigma0_sq,
                native: None,
            }),
        }
    }
}

fn translate_sum(k: MaternKernel, centers: &[Vec<f64>], weights: &[f64]) -> Result<NativeElement> {
    if centers.len() != weights.len() || centers.is_empty() {
        return Err(Error::invalid("kernel-translate centers and weights must be nonempty and of equal length"));
    }
    let pts = PointSet::from_rows(centers, k.dim())?;
    NativeElement::new(k, pts, nalgebra::DVector::from_column_slice(weights))
}

/// An instantiated problem.
#[derive(Clone)]
pub struct SyntheticProblem {
    pub spec: ProblemSpec,
    pub zeta: Zeta,
    pub model: SharedModel,
    pub theta_domain: Domain,
    pub domain: Domain,
    pub sigma0_sq: f64,
    /// `(zeta, g)` as native-space elements, for kernel-translate problems.
    pub native: Option<(NativeElement, NativeElement)>,
}

impl SyntheticProblem {
    pub fn zeta_at(&self, points: &PointSet) -> Vec<f64> {
        points.iter().map(|x| (self.zeta)(x)).collect()
    }

    /// `<zeta, g> / <g, g>` in the native space of the translate kernel, for
    /// kernel-translate problems.
    pub fn theta_star_closed_form(&self) -> Option<f64> {
        let (z, g) = self.native.as_ref()?;
        let zg = crate::native::inner_product(z, g).ok()?;
        Some(zg / g.norm_sq())
    }
}
