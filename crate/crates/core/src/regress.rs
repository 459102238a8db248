//! Penalized least-squares calibration.
//!
//! For fixed `theta` the inner minimization over the discrepancy is a kernel
//! ridge regression with closed-form value `lambda r^T (Sigma + lambda I)^{-1} r`,
//! `r = y^p - y^s(x, theta)`. The outer problem over `theta` is solved by a
//! coarse grid followed by golden-section refinement along each coordinate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{Design, Domain, PointSet};
use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, MaternKernel, DEFAULT_JITTER};
use crate::linalg::Cholesky;
use crate::model::{eval_points, DesignCache, Model, SharedModel};
use crate::native::{clamp_power, power_with};
use crate::par;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Data, computer model, parameter box, kernel and smoothing parameter.
#[derive(Clone)]
pub struct CalibrationProblem {
    design: Design,
    yp: DVector<f64>,
    model: SharedModel,
    theta_domain: Domain,
    kernel: MaternKernel,
    lambda: f64,
    jitter: f64,
}

impl std::fmt::Debug for CalibrationProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CalibrationProblem")
            .field("n", &self.design.len())
            .field("model", &self.model.name())
            .field("theta_domain", &self.theta_domain)
            .field("kernel", &self.kernel)
            .field("lambda", &self.lambda)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl CalibrationProblem {
    pub fn new(
        design: Design,
        yp: DVector<f64>,
        model: SharedModel,
        theta_domain: Domain,
        kernel: MaternKernel,
        lambda: f64,
    ) -> Result<Self> {
        if yp.len() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                found: yp.len(),
            });
        }
        if yp.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("physical responses contain non-finite values"));
        }
        if kernel.dim() != design.dim() {
            return Err(Error::DimensionMismatch {
                expected: design.dim(),
                found: kernel.dim(),
            });
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        Ok(CalibrationProblem {
            design,
            yp,
            model,
            theta_domain,
            kernel,
            lambda,
            jitter: DEFAULT_JITTER,
        })
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::invalid(format!("jitter must be nonnegative, got {jitter}")));
        }
        self.jitter = jitter;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn yp(&self) -> &DVector<f64> {
        &self.yp
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    pub fn theta_domain(&self) -> &Domain {
        &self.theta_domain
    }

    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_domain.dim(),
                found: theta.len(),
            });
        }
        if !self.theta_domain.contains(theta) {
            return Err(Error::invalid(format!("theta {theta:?} lies outside the parameter domain")));
        }
        Ok(())
    }

    /// `y^p - y^s(x, theta)`.
    pub fn residuals(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        let ys = eval_points(self.model.as_ref(), self.design.points(), theta)?;
        Ok(&self.yp - ys)
    }
}

/// Grid-then-refine settings for the search over `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Grid points per parameter dimension.
    pub grid_points: usize,
    /// Coordinate sweeps of golden-section refinement.
    pub refine_passes: usize,
    /// Bracket width at which a golden-section search stops, relative to the grid cell.
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 64,
            refine_passes: 3,
            tol: 1e-6,
        }
    }
}

/// The regularized system `Sigma + lambda I` for one design, kernel and lambda.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    gram: GramMatrix,
    regularized: Cholesky,
    lambda: f64,
}

impl RidgeSystem {
    pub fn new(gram: GramMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        let mut a = gram.entries().clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let regularized = Cholesky::factor(&a, gram.jitter() + lambda)?;
        Ok(RidgeSystem {
            gram,
            regularized,
            lambda,
        })
    }

    pub fn for_problem(problem: &CalibrationProblem) -> Result<Self> {
        let g = gram(&problem.design, &problem.kernel, problem.jitter)?;
        Self::new(g, problem.lambda)
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(Sigma + lambda I)^{-1} r`.
    pub fn coefficients(&self, r: &DVector<f64>) -> DVector<f64> {
        self.regularized.solve(r)
    }

    /// `lambda r^T (Sigma + lambda I)^{-1} r`.
    pub fn profile_value(&self, r: &DVector<f64>) -> f64 {
        (self.lambda * self.regularized.inv_quad_form(r.as_slice())).max(0.0)
    }
}

/// `alpha = (Sigma + lambda I)^{-1} r`.
pub fn kernel_ridge(residuals: &DVector<f64>, g: &GramMatrix, lambda: f64) -> Result<DVector<f64>> {
    if residuals.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: residuals.len(),
        });
    }
    Ok(RidgeSystem::new(g.clone(), lambda)?.coefficients(residuals))
}

/// Minimum over the discrepancy of the penalized objective at `theta`.
pub fn profile_objective(theta: &[f64], problem: &CalibrationProblem) -> Result<f64> {
    let r = problem.residuals(theta)?;
    Ok(RidgeSystem::for_problem(problem)?.profile_value(&r))
}

/// Calibrated parameter and fitted discrepancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub theta_hat: Vec<f64>,
    /// Discrepancy coefficients: `(Sigma + lambda I) alpha = r(theta_hat)`.
    pub alpha: Vec<f64>,
    /// Fitted discrepancy at the design points, `Sigma alpha`.
    pub delta_hat: Vec<f64>,
    pub lambda: f64,
    pub sigma2_hat: f64,
    pub objective: f64,
    /// Distinct parameter values at which the model was evaluated.
    pub evaluations: usize,
}

impl CalibrationFit {
    /// `tau^2 = sigma2_hat / lambda`.
    pub fn tau2(&self) -> f64 {
        self.sigma2_hat / self.lambda
    }
}

struct Evaluator<'a> {
    cache: DesignCache<'a>,
    yp: &'a DVector<f64>,
    system: &'a RidgeSystem,
}

impl Evaluator<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        let ys = self.cache.get(theta)?;
        let r = self.yp - ys.as_ref();
        Ok(self.system.profile_value(&r))
    }
}

/// Minimizes the profile objective over the parameter box.
///
/// Grid values are compared lexicographically by (value, grid index), so ties
/// resolve to the first grid point. Refinement only moves on strict
/// improvement, which keeps an unidentified parameter at the smallest grid
/// point attaining the minimum.
pub fn calibrate(problem: &CalibrationProblem, search: &SearchConfig) -> Result<CalibrationFit> {
    if search.grid_points == 0 {
        return Err(Error::invalid("search grid needs at least one point per dimension"));
    }
    let system = RidgeSystem::for_problem(problem)?;
    let model: &dyn Model = problem.model.as_ref();
    let eval = Evaluator {
        cache: DesignCache::new(model, problem.design.points()),
        yp: &problem.yp,
        system: &system,
    };

    let grid = problem.theta_domain.grid(search.grid_points);
    let values = par::map_range_if(model.concurrency_safe(), grid.len(), |g| eval.value(grid.point(g)));

    let mut best: Option<(f64, usize)> = None;
    let mut first_error = None;
    for (g, v) in values.iter().enumerate() {
        match v {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(b, _)| *v < b) {
                    best = Some((*v, g));
                }
            }
            Ok(v) => {
                first_error.get_or_insert_with(|| format!("non-finite objective {v} at grid point {g}"));
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let (mut best_value, best_index) = best.ok_or_else(|| {
        Error::Calibration(format!(
            "every model evaluation on the parameter grid failed; first failure: {}",
            first_error.unwrap_or_default()
        ))
    })?;
    let mut theta = grid.point(best_index).to_vec();

    let cells: Vec<f64> = (0..problem.theta_domain.dim())
        .map(|k| {
            let w = problem.theta_domain.width(k);
            if search.grid_points > 1 {
                w / (search.grid_points - 1) as f64
            } else {
                0.5 * w
            }
        })
        .collect();
    for _ in 0..search.refine_passes {
        let mut moved = false;
        for k in 0..theta.len() {
            let (lo, hi) = problem.theta_domain.bounds()[k];
            let a = (theta[k] - cells[k]).max(lo);
            let b = (theta[k] + cells[k]).min(hi);
            if b - a <= 0.0 {
                continue;
            }
            let tol = (search.tol * cells[k]).max(f64::EPSILON * (1.0 + theta[k].abs()));
            let mut probe = theta.clone();
            let mut f = |t: f64| {
                probe[k] = t;
                eval.value(&probe).unwrap_or(f64::INFINITY)
            };
            let (t, v) = golden_section(&mut f, a, b, tol);
            if v < best_value {
                best_value = v;
                theta[k] = t;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let ys = eval.cache.get(&theta)?;
    let r = &problem.yp - ys.as_ref();
    let alpha = system.coefficients(&r);
    let delta_hat = system.gram().entries() * &alpha;
    let n = r.len() as f64;
    let sigma2 = (&r - &delta_hat).norm_squared() / n;
    Ok(CalibrationFit {
        theta_hat: theta,
        objective: system.profile_value(&r),
        alpha: alpha.as_slice().to_vec(),
        delta_hat: delta_hat.as_slice().to_vec(),
        lambda: problem.lambda,
        sigma2_hat: sigma2,
        evaluations: eval.cache.len(),
    })
}

/// Golden-section search on `[a, b]`; returns the best point seen, including both ends.
fn golden_section(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut best = (a, f(a));
    let fb = f(b);
    if fb < best.1 {
        best = (b, fb);
    }
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        for (t, v) in [(c, fc), (d, fd)] {
            if v < best.1 {
                best = (t, v);
            }
        }
    }
    best
}

/// `||y^p - y^s(x, theta_hat) - delta_hat||^2 / n`.
pub fn sigma2_hat(fit: &CalibrationFit, problem: &CalibrationProblem) -> Result<f64> {
    let r = problem.residuals(&fit.theta_hat)?;
    if fit.delta_hat.len() != r.len() {
        return Err(Error::DimensionMismatch {
            expected: r.len(),
            found: fit.delta_hat.len(),
        });
    }
    let ss: f64 = r.iter().zip(&fit.delta_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss / r.len() as f64)
}

/// `lambda = c n^e` with `e = d / (2 upsilon + 2 d)` unless overridden.
pub fn smoothing_schedule(n: usize, k: &MaternKernel, c: f64, exponent_override: Option<f64>) -> f64 {
    let d = k.dim() as f64;
    let e = exponent_override.unwrap_or(d / (2.0 * k.upsilon() + 2.0 * d));
    c * (n.max(1) as f64).powf(e)
}

/// Predictive mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// `y^s(x_new, theta_hat) + Sigma_1^T alpha` and `tau^2 P(x_new) + sigma2_hat`.
pub fn predict(fit: &CalibrationFit, problem: &CalibrationProblem, x_new: &PointSet) -> Result<Prediction> {
    problem.kernel.check_set(x_new)?;
    if fit.alpha.len() != problem.design.len() {
        return Err(Error::DimensionMismatch {
            expected: problem.design.len(),
            found: fit.alpha.len(),
        });
    }
    let g = gram(&problem.design, &problem.kernel, problem.jitter)?;
    let ys = eval_points(problem.model.as_ref(), x_new, &fit.theta_hat)?;
    let tau2 = fit.tau2();
    let centers = problem.design.points();
    let rows = par::map_range(x_new.len(), |j| -> Result<(f64, f64)> {
        let q = x_new.point(j);
        let (column, _) = g.cross_with_nugget(centers, q, &problem.kernel);
        let disc: f64 = column.iter().zip(&fit.alpha).map(|(c, a)| c * a).sum();
        let power = power_with(&g, centers, &problem.kernel, q)?;
        Ok((ys[j] + disc, tau2 * power + fit.sigma2_hat))
    });
    let mut mean = Vec::with_capacity(rows.len());
    let mut variance = Vec::with_capacity(rows.len());
    for row in rows {
        let (m, v) = row?;
        mean.push(m);
        variance.push(v);
    }
    Ok(Prediction { mean, variance })
}

/// The noiseless-case predictor `y^s(x_new, theta) + s_{eps(., theta), x}(x_new)`.
/// Holds one Gram factorization so it can be evaluated for many `theta`.
pub struct NoiselessPredictor {
    design: Design,
    yp: DVector<f64>,
    model: SharedModel,
    kernel: MaternKernel,
    gram: GramMatrix,
}

impl NoiselessPredictor {
    pub fn new(design: Design, yp: DVector<f64>, model: SharedModel, kernel: MaternKernel, jitter: f64) -> Result<Self> {
        if yp.len() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                found: yp.len(),
            });
        }
        let g = gram(&design, &kernel, jitter)?;
        Ok(NoiselessPredictor {
            design,
            yp,
            model,
            kernel,
            gram: g,
        })
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Interpolation coefficients `Sigma^{-1} (y^p - y^s(x, theta))`.
    pub fn coefficients(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let ys = eval_points(self.model.as_ref(), self.design.points(), theta)?;
        Ok(self.gram.solve(&(&self.yp - ys)))
    }

    pub fn predict(&self, theta: &[f64], x_new: &PointSet) -> Result<Vec<f64>> {
        self.kernel.check_set(x_new)?;
        let u = self.coefficients(theta)?;
        let ys = eval_points(self.model.as_ref(), x_new, theta)?;
        let centers = self.design.points();
        Ok(par::map_range(x_new.len(), |j| {
            let (column, _) = self.gram.cross_with_nugget(centers, x_new.point(j), &self.kernel);
            ys[j] + column.iter().zip(u.iter()).map(|(c, a)| c * a).sum::<f64>()
        }))
    }

    /// Power function at each query point.
    pub fn power(&self, x_new: &PointSet) -> Result<Vec<f64>> {
        self.kernel.check_set(x_new)?;
        let centers = self.design.points();
        par::map_range(x_new.len(), |j| {
            clamp_power(self.gram.raw_power(centers, x_new.point(j), &self.kernel), self.gram.jitter())
        })
        .into_iter()
        .collect()
    }
}

/// `mu_hat_{theta, gamma}(x_new)` for each query point.
pub fn noiseless_predict(
    design: &Design,
    yp: &DVector<f64>,
    model: &SharedModel,
    theta: &[f64],
    k: &MaternKernel,
    x_new: &PointSet,
    jitter: f64,
) -> Result<Vec<f64>> {
    NoiselessPredictor::new(design.clone(), yp.clone(), model.clone(), *k, jitter)?.predict(theta, x_new)
}

/// `tau^2 P(x_new)`.
pub fn noiseless_variance(tau2: f64, design: &Design, k: &MaternKernel, x_new: &[f64], jitter: f64) -> Result<f64> {
    if !(tau2 >= 0.0) {
        return Err(Error::invalid(format!("tau2 must be nonnegative, got {tau2}")));
    }
    if tau2 == 0.0 {
        return Ok(0.0);
    }
    Ok(tau2 * crate::native::power_function(design, k, x_new, jitter)?)
}

/// Native-norm minimizer over a finite parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStar {
    pub theta: Vec<f64>,
    pub index: usize,
    /// `y^T Sigma^{-1} y` with `y = zeta(x) - y^s(x, theta)` for every grid point.
    pub norms_sq: Vec<f64>,
}

/// `argmin_theta ||zeta - y^s(., theta)||^2`, with the native norm bounded
/// below by the interpolant norm on `dense_design`. Ties go to the smallest index.
pub fn theta_star_oracle(
    model: &dyn Model,
    zeta: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: &MaternKernel,
    dense_design: &Design,
    theta_grid: &PointSet,
    jitter: f64,
) -> Result<ThetaStar> {
    if theta_grid.is_empty() {
        return Err(Error::invalid("parameter grid is empty"));
    }
    let g = gram(dense_design, k, jitter)?;
    let z = DVector::from_vec(dense_design.points().iter().map(zeta).collect());
    let norms = par::map_range_if(model.concurrency_safe(), theta_grid.len(), |t| -> Result<f64> {
        let ys = eval_points(model, dense_design.points(), theta_grid.point(t))?;
        let y = &z - ys;
        Ok(g.inv_quad_form(y.as_slice()).max(0.0))
    });
    let norms_sq: Vec<f64> = norms.into_iter().collect::<Result<_>>()?;
    let mut index = 0;
    for (i, v) in norms_sq.iter().enumerate() {
        if *v < norms_sq[index] {
            index = i;
        }
    }
    Ok(ThetaStar {
        theta: theta_grid.point(index).to_vec(),
        index,
        norms_sq,
    })
}

/// Dense matrix `Sigma` (with jitter) used by a problem; convenient for oracles.
pub fn problem_gram(problem: &CalibrationProblem) -> Result<DMatrix<f64>> {
    Ok(gram(&problem.design, &problem.kernel, problem.jitter)?.entries().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{shared, FnModel};

    fn unit_gram(n: usize) -> GramMatrix {
        let k = MaternKernel::new(0.5, 1.0, 1).unwrap();
        let far = Design::new(
            PointSet::from_scalars(&(0..n).map(|i| 1e3 * i as f64).collect::<Vec<_>>()).unwrap(),
            Domain::new(vec![(0.0, 1e4)]).unwrap(),
        )
        .unwrap();
        gram(&far, &k, 0.0).unwrap()
    }

    #[test]
    fn ridge_examples() {
        let g = unit_gram(1);
        let r = DVector::from_vec(vec![2.0]);
        let a = kernel_ridge(&r, &g, 1.0).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15);
        let s = RidgeSystem::new(g.clone(), 1.0).unwrap();
        assert!((s.profile_value(&r) - 2.0).abs() < 1e-15);
        let big = kernel_ridge(&r, &g, 1e12).unwrap();
        assert!(big.norm() <= 1e-9 * r.norm());
        let small = kernel_ridge(&r, &g, 1e-10).unwrap();
        assert!((g.entries() * small - &r).norm() < 1e-6);
        assert!(kernel_ridge(&r, &g, 0.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let k = MaternKernel::new(1.0, 1.0, 1).unwrap();
        assert_eq!(smoothing_schedule(1, &k, 0.7, None), 0.7);
        assert!((smoothing_schedule(16, &k, 1.0, None) - 2.0).abs() < 1e-14);
        assert!((smoothing_schedule(16, &k, 1.0, Some(0.5)) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (t, v) = golden_section(&mut |t: f64| (t - 0.3) * (t - 0.3), 0.0, 1.0, 1e-9);
        assert!((t - 0.3).abs() < 1e-8);
        assert!(v < 1e-15);
    }

    #[test]
    fn perfect_model_returns_smallest_theta() {
        let design = Design::new(PointSet::from_scalars(&[0.0, 0.3, 0.7, 1.0]).unwrap(), Domain::unit(1)).unwrap();
        let yp = DVector::from_iterator(4, design.points().iter().map(|x| (3.0 * x[0]).sin()));
        let model = shared(FnModel::new("zeta", |x: &[f64], _: &[f64]| (3.0 * x[0]).sin()));
        let k = MaternKernel::new(1.5, 1.0, 1).unwrap();
        let p = CalibrationProblem::new(design, yp, model, Domain::new(vec![(-1.0, 2.0)]).unwrap(), k, 0.5).unwrap();
        let fit = calibrate(&p, &SearchConfig::default()).unwrap();
        assert_eq!(fit.theta_hat, vec![-1.0]);
        assert!(fit.alpha.iter().all(|&a| a == 0.0));
        assert_eq!(fit.objective, 0.0);
        assert_eq!(sigma2_hat(&fit, &p).unwrap(), 0.0);
    }

    #[test]
    fn all_failing_model_is_a_calibration_error() {
        let design = Design::new(PointSet::from_scalars(&[0.0, 1.0]).unwrap(), Domain::unit(1)).unwrap();
        let model = shared(FnModel::new("nan", |_: &[f64], _: &[f64]| f64::NAN));
        let k = MaternKernel::new(1.5, 1.0, 1).unwrap();
        let p = CalibrationProblem::new(design, DVector::zeros(2), model, Domain::unit(1), k, 1.0).unwrap();
        let err = calibrate(&p, &SearchConfig { grid_points: 5, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Calibration(ref m) if m.contains("non-finite")));
    }
}
