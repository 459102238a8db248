//! Convergence-rate studies.
//!
//! Every (size, replicate) task draws from its own stream seeded by
//! `derive_seed(master, [size index, replicate])`, so reports are identical
//! for any thread count and any ordering of the size ladder.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::designs::{make_design, DesignKind};
use super::problems::{ProblemSpec, SyntheticProblem};
use super::slope::{fit_loglog_slope, SlopeFit};
use crate::design::{Design, Domain, PointSet};
use crate::error::{Error, Result};
use crate::kernel::{gram, MaternKernel, DEFAULT_JITTER};
use crate::model::eval_points;
use crate::native::{clamp_power, fill_distance, DEFAULT_FILL_RESOLUTION};
use crate::par::{self, derive_seed};
use crate::regress::{
    calibrate, smoothing_schedule, theta_star_oracle, CalibrationProblem, SearchConfig, ThetaStar,
};

/// Per-size values of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    /// One value per replicate.
    pub values: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub n: usize,
    /// Median fill distance over replicates.
    pub h: f64,
    pub replicates: usize,
    pub metrics: Vec<MetricSeries>,
}

impl SizeRow {
    pub fn metric(&self, name: &str) -> Option<&MetricSeries> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlopeRule {
    /// Slope against `log h` at least `min`.
    AtLeast { min: f64 },
    /// `|slope - target| <= tolerance`.
    Within { tolerance: f64 },
    /// Slope at most `max`, and medians strictly decreasing across the last two size pairs.
    Decreasing { max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub metric: String,
    /// `"h"` or `"n"`.
    pub against: String,
    pub target_exponent: f64,
    pub rule: SlopeRule,
    pub fit: SlopeFit,
    pub pass: bool,
}

impl SlopeCheck {
    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let rule = match &self.rule {
            SlopeRule::AtLeast { min } => format!(">= {min:.3}"),
            SlopeRule::Within { tolerance } => {
                format!("within {tolerance} of {:.3}", self.target_exponent)
            }
            SlopeRule::Decreasing { max } => format!("<= {max:.3} with decreasing medians"),
        };
        format!(
            "{verdict} {} slope vs log {} = {:.4} (stderr {:.4}, target exponent {:.4}, rule {rule})",
            self.metric, self.against, self.fit.slope, self.fit.stderr, self.target_exponent
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSize {
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub study: String,
    pub problem: ProblemSpec,
    pub upsilon: f64,
    pub gamma: f64,
    pub dim: usize,
    pub seed: u64,
    pub sizes: Vec<SizeRow>,
    pub dropped: Vec<DroppedSize>,
    pub checks: Vec<SlopeCheck>,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, metric: &str) -> Option<&SlopeCheck> {
        self.checks.iter().find(|c| c.metric == metric)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks.iter().map(SlopeCheck::line).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    /// One row per size, replicate and metric.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["study", "n", "h", "replicate", "metric", "value"]).map_err(io)?;
        for row in &self.sizes {
            for m in &row.metrics {
                for (r, v) in m.values.iter().enumerate() {
                    w.write_record([
                        self.study.clone(),
                        row.n.to_string(),
                        format!("{:.17e}", row.h),
                        r.to_string(),
                        m.name.clone(),
                        format!("{v:.17e}"),
                    ])
                    .map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

/// Sizes in increasing order without repeats.
fn ladder(sizes: &[usize]) -> Vec<usize> {
    let mut s = sizes.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Target exponents (as positive decay rates) at smoothness `upsilon` in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetExponents {
    /// `(1/n) sum (zeta_hat - zeta)^2`: `(2v + d) / (2v + 2d)`.
    pub empirical_mse: f64,
    /// `L2`: `(v + d/2) / (2v + 2d)`.
    pub l2: f64,
    /// `L_inf`: `v / (2v + 2d)`.
    pub linf: f64,
    /// `|sigma2_hat - sigma0^2|` and the predictive variance: `(v + d/2) / (2v + 2d)`.
    pub sigma2: f64,
    /// Noiseless mean and variance bounds in `h`: `v`.
    pub noiseless: f64,
}

impl TargetExponents {
    pub fn new(upsilon: f64, d: usize) -> Self {
        let d = d as f64;
        let denom = 2.0 * upsilon + 2.0 * d;
        TargetExponents {
            empirical_mse: (2.0 * upsilon + d) / denom,
            l2: (upsilon + d / 2.0) / denom,
            linf: upsilon / denom,
            sigma2: (upsilon + d / 2.0) / denom,
            noiseless: upsilon,
        }
    }
}

fn series(name: &str, values: Vec<f64>) -> MetricSeries {
    MetricSeries {
        name: name.to_string(),
        median: median(&values),
        values,
    }
}

fn check_at_least(rows: &[SizeRow], metric: &str, target: f64, slack: f64) -> Result<SlopeCheck> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.metric(metric).map_or(f64::NAN, |m| m.median))).collect();
    let fit = fit_loglog_slope(&pts)?;
    let min = target - slack;
    Ok(SlopeCheck {
        metric: metric.to_string(),
        against: "h".into(),
        target_exponent: target,
        pass: fit.slope >= min,
        rule: SlopeRule::AtLeast { min },
        fit,
    })
}

fn check_vs_n(rows: &[SizeRow], metric: &str, target: f64, rule: SlopeRule) -> Result<SlopeCheck> {
    let medians: Vec<f64> = rows.iter().map(|r| r.metric(metric).map_or(f64::NAN, |m| m.median)).collect();
    let pts: Vec<(f64, f64)> = rows.iter().zip(&medians).map(|(r, &m)| (r.n as f64, m)).collect();
    let fit = fit_loglog_slope(&pts)?;
    let pass = match &rule {
        SlopeRule::AtLeast { min } => fit.slope >= *min,
        SlopeRule::Within { tolerance } => (fit.slope - target).abs() <= *tolerance,
        SlopeRule::Decreasing { max } => {
            let k = medians.len();
            fit.slope <= *max && k >= 3 && medians[k - 3] > medians[k - 2] && medians[k - 2] > medians[k - 1]
        }
    };
    Ok(SlopeCheck {
        metric: metric.to_string(),
        against: "n".into(),
        target_exponent: target,
        rule,
        fit,
        pass,
    })
}

/// Splits per-task outcomes into per-size groups. A size with a numerical
/// failure in any replicate is reported as dropped; other errors abort.
fn group_by_size<T>(
    sizes: &[usize],
    replicates: usize,
    outcomes: Vec<Result<T>>,
) -> Result<Vec<(usize, std::result::Result<Vec<T>, String>)>> {
    let mut it = outcomes.into_iter();
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut ok = Vec::with_capacity(replicates);
        let mut failure = None;
        for o in it.by_ref().take(replicates) {
            match o {
                Ok(v) => ok.push(v),
                Err(e) if e.is_numerical() => {
                    failure.get_or_insert_with(|| e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        out.push((n, failure.map_or(Ok(ok), Err)));
    }
    Ok(out)
}

/// Interpolation errors fall below `1e-8` well inside the default ladder for
/// smooth kernels, so the default nugget is much smaller than the library one.
pub const NOISELESS_JITTER: f64 = 1e-12;

/// Settings of the noiseless (interpolation) study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiselessConfig {
    pub sizes: Vec<usize>,
    pub design: DesignKind,
    /// Grid points over the parameter box for the sup over `theta`.
    pub theta_points: usize,
    /// Approximate size of the query grid, spread evenly over the axes.
    pub query_points: usize,
    pub replicates: usize,
    pub seed: u64,
    pub jitter: f64,
    /// Allowed shortfall of the fitted slope below `upsilon`.
    pub slack: f64,
}

impl Default for NoiselessConfig {
    fn default() -> Self {
        NoiselessConfig {
            sizes: vec![8, 16, 32, 64, 128, 256],
            design: DesignKind::RegularGrid,
            theta_points: 5,
            query_points: 4096,
            replicates: 1,
            seed: 0,
            jitter: NOISELESS_JITTER,
            slack: 0.35,
        }
    }
}

struct NoiselessOutcome {
    h: f64,
    mean_sup: f64,
    variance_sup: f64,
}

fn noiseless_task(
    problem: &SyntheticProblem,
    k: &MaternKernel,
    cfg: &NoiselessConfig,
    n: usize,
    seed: u64,
    thetas: &PointSet,
    query: &PointSet,
    zeta_q: &[f64],
) -> Result<NoiselessOutcome> {
    let design = make_design(cfg.design, n, &problem.domain, seed)?;
    let g = gram(&design, k, cfg.jitter)?;
    let centers = design.points();
    let m = query.len();
    let mut cross = DMatrix::zeros(m, n);
    let mut prior = vec![0.0; m];
    let rows = par::map_range(m, |j| g.cross_with_nugget(centers, query.point(j), k));
    for (j, (col, p)) in rows.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            cross[(j, i)] = v;
        }
        prior[j] = p;
    }
    let zeta_x = DVector::from_vec(problem.zeta_at(centers));
    let mut mean_sup: f64 = 0.0;
    for t in 0..thetas.len() {
        let theta = thetas.point(t);
        let ys_x = eval_points(problem.model.as_ref(), centers, theta)?;
        let ys_q = eval_points(problem.model.as_ref(), query, theta)?;
        let u = g.solve(&(&zeta_x - ys_x));
        let pred = &cross * u + ys_q;
        for (p, z) in pred.iter().zip(zeta_q) {
            mean_sup = mean_sup.max((p - z).abs());
        }
    }
    let powers = par::map_range(m, |j| -> Result<f64> {
        let row: Vec<f64> = cross.row(j).iter().copied().collect();
        clamp_power(prior[j] - g.inv_quad_form(&row), g.jitter())
    });
    let mut variance_sup: f64 = 0.0;
    for p in powers {
        variance_sup = variance_sup.max(p?);
    }
    Ok(NoiselessOutcome {
        h: fill_distance(&design, DEFAULT_FILL_RESOLUTION)?,
        mean_sup,
        variance_sup,
    })
}

/// Interpolation study: `sup_theta sup_x |mu_hat - zeta|` and `sup_x P(x)` against the fill distance.
pub fn run_rate_study_noiseless(problem: &SyntheticProblem, k: &MaternKernel, cfg: &NoiselessConfig) -> Result<RateReport> {
    k.require_theory()?;
    if cfg.replicates == 0 || cfg.theta_points == 0 || cfg.query_points == 0 {
        return Err(Error::invalid("replicates, theta_points and query_points must be positive"));
    }
    if k.dim() != problem.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.domain.dim(),
            found: k.dim(),
        });
    }
    let sizes = ladder(&cfg.sizes);
    let thetas = problem.theta_domain.grid(cfg.theta_points);
    let query = problem.domain.grid(per_axis(cfg.query_points, problem.domain.dim()));
    let zeta_q = problem.zeta_at(&query);
    let tasks: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..cfg.replicates).map(move |r| (s, r)))
        .collect();
    let outcomes = par::map_range(tasks.len(), |t| {
        let (s, r) = tasks[t];
        let seed = derive_seed(cfg.seed, &[s as u64, r as u64]);
        noiseless_task(problem, k, cfg, sizes[s], seed, &thetas, &query, &zeta_q)
    });
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (n, group) in group_by_size(&sizes, cfg.replicates, outcomes)? {
        let ok: Vec<NoiselessOutcome> = match group {
            Ok(v) => v,
            Err(reason) => {
                dropped.push(DroppedSize { n, reason });
                continue;
            }
        };
        rows.push(SizeRow {
            n,
            h: median(&ok.iter().map(|o| o.h).collect::<Vec<_>>()),
            replicates: ok.len(),
            metrics: vec![
                series("mean_sup_error", ok.iter().map(|o| o.mean_sup).collect()),
                series("variance_sup", ok.iter().map(|o| o.variance_sup).collect()),
            ],
        });
    }
    let target = TargetExponents::new(k.upsilon(), k.dim()).noiseless;
    let checks = vec![
        check_at_least(&rows, "mean_sup_error", target, cfg.slack)?,
        check_at_least(&rows, "variance_sup", target, cfg.slack)?,
    ];
    Ok(RateReport {
        study: "noiseless".into(),
        problem: problem.spec.clone(),
        upsilon: k.upsilon(),
        gamma: k.gamma(),
        dim: k.dim(),
        seed: cfg.seed,
        sizes: rows,
        dropped,
        checks,
    })
}

/// Settings of the noisy (penalized least squares) study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// `lambda = c n^e`.
    pub lambda_c: f64,
    pub lambda_exponent: Option<f64>,
    pub query_points: usize,
    pub search: SearchConfig,
    pub jitter: f64,
    pub tolerance: f64,
    pub sigma_slope_max: f64,
}

impl Default for NoisyConfig {
    fn default() -> Self {
        NoisyConfig {
            sizes: vec![32, 64, 128, 256, 512, 1024],
            replicates: 20,
            seed: 0,
            lambda_c: 1.0,
            lambda_exponent: None,
            query_points: 4096,
            search: SearchConfig::default(),
            jitter: DEFAULT_JITTER,
            tolerance: 0.15,
            sigma_slope_max: -0.2,
        }
    }
}

/// Points per axis of a tensor grid with about `total` points.
pub fn per_axis(total: usize, d: usize) -> usize {
    let mut m = (total as f64).powf(1.0 / d as f64).floor() as usize;
    while (m + 1).checked_pow(d as u32).is_some_and(|t| t <= total) {
        m += 1;
    }
    m.max(2)
}

/// Trapezoid weights of a tensor grid with `per_dim` points per axis over `domain`.
pub fn trapezoid_weights(domain: &Domain, per_dim: usize) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = domain
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            if per_dim < 2 {
                return vec![hi - lo];
            }
            let step = (hi - lo) / (per_dim - 1) as f64;
            (0..per_dim)
                .map(|i| if i == 0 || i + 1 == per_dim { 0.5 * step } else { step })
                .collect()
        })
        .collect();
    let d = axes.len();
    let total = per_dim.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut w = 1.0;
            for k in (0..d).rev() {
                w *= axes[k][rem % per_dim];
                rem /= per_dim;
            }
            w
        })
        .collect()
}

struct NoisyOutcome {
    h: f64,
    empirical_mse: f64,
    grid_l2: f64,
    grid_linf: f64,
    sigma2_error: f64,
    variance_error: f64,
}

fn noisy_task(
    problem: &SyntheticProblem,
    k: &MaternKernel,
    cfg: &NoisyConfig,
    n: usize,
    seed: u64,
    query: &PointSet,
    weights: &[f64],
    zeta_q: &[f64],
) -> Result<NoisyOutcome> {
    let design = make_design(DesignKind::UniformRandom, n, &problem.domain, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let noise = Normal::new(0.0, problem.sigma0_sq.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let zeta_x = problem.zeta_at(design.points());
    let yp = DVector::from_iterator(n, zeta_x.iter().map(|z| z + noise.sample(&mut rng)));
    let lambda = smoothing_schedule(n, k, cfg.lambda_c, cfg.lambda_exponent);
    let cp = CalibrationProblem::new(design.clone(), yp, problem.model.clone(), problem.theta_domain.clone(), *k, lambda)?
        .with_jitter(cfg.jitter)?;
    let fit = calibrate(&cp, &cfg.search)?;

    let ys_x = eval_points(problem.model.as_ref(), design.points(), &fit.theta_hat)?;
    let empirical_mse = (0..n)
        .map(|i| {
            let e = ys_x[i] + fit.delta_hat[i] - zeta_x[i];
            e * e
        })
        .sum::<f64>()
        / n as f64;

    let pred = crate::regress::predict(&fit, &cp, query)?;
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    let mut var_err: f64 = 0.0;
    for j in 0..query.len() {
        let e = pred.mean[j] - zeta_q[j];
        l2 += weights[j] * e * e;
        linf = linf.max(e.abs());
        var_err = var_err.max((pred.variance[j] - problem.sigma0_sq).abs());
    }
    Ok(NoisyOutcome {
        h: fill_distance(&design, DEFAULT_FILL_RESOLUTION)?,
        empirical_mse,
        grid_l2: l2.sqrt(),
        grid_linf: linf,
        sigma2_error: (fit.sigma2_hat - problem.sigma0_sq).abs(),
        variance_error: var_err,
    })
}

/// Penalized least-squares study on uniform random designs, with rates against `n`.
pub fn run_rate_study_noisy(problem: &SyntheticProblem, k: &MaternKernel, cfg: &NoisyConfig) -> Result<RateReport> {
    if cfg.replicates == 0 || cfg.query_points == 0 {
        return Err(Error::invalid("replicates and query_points must be positive"));
    }
    if k.dim() != problem.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.domain.dim(),
            found: k.dim(),
        });
    }
    let sizes = ladder(&cfg.sizes);
    let m = per_axis(cfg.query_points, problem.domain.dim());
    let query = problem.domain.grid(m);
    let weights = trapezoid_weights(&problem.domain, m);
    let zeta_q = problem.zeta_at(&query);
    let tasks: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..cfg.replicates).map(move |r| (s, r)))
        .collect();
    let outcomes = par::map_range(tasks.len(), |t| {
        let (s, r) = tasks[t];
        let seed = derive_seed(cfg.seed, &[s as u64, r as u64]);
        noisy_task(problem, k, cfg, sizes[s], seed, &query, &weights, &zeta_q)
    });
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (n, group) in group_by_size(&sizes, cfg.replicates, outcomes)? {
        let ok: Vec<NoisyOutcome> = match group {
            Ok(v) => v,
            Err(reason) => {
                dropped.push(DroppedSize { n, reason });
                continue;
            }
        };
        let col = |f: fn(&NoisyOutcome) -> f64| ok.iter().map(&f).collect::<Vec<f64>>();
        rows.push(SizeRow {
            n,
            h: median(&col(|o| o.h)),
            replicates: ok.len(),
            metrics: vec![
                series("empirical_mse", col(|o| o.empirical_mse)),
                series("empirical_l2", col(|o| o.empirical_mse.sqrt())),
                series("grid_l2", col(|o| o.grid_l2)),
                series("grid_linf", col(|o| o.grid_linf)),
                series("sigma2_error", col(|o| o.sigma2_error)),
                series("variance_sup_error", col(|o| o.variance_error)),
            ],
        });
    }
    let t = TargetExponents::new(k.upsilon(), k.dim());
    let within = SlopeRule::Within {
        tolerance: cfg.tolerance,
    };
    let decreasing = SlopeRule::Decreasing {
        max: cfg.sigma_slope_max,
    };
    let checks = vec![
        check_vs_n(&rows, "empirical_mse", -t.empirical_mse, within.clone())?,
        check_vs_n(&rows, "empirical_l2", -t.l2, within.clone())?,
        check_vs_n(&rows, "grid_l2", -t.l2, within.clone())?,
        check_vs_n(&rows, "grid_linf", -t.linf, within)?,
        check_vs_n(&rows, "sigma2_error", -t.sigma2, decreasing.clone())?,
        check_vs_n(&rows, "variance_sup_error", -t.sigma2, decreasing)?,
    ];
    Ok(RateReport {
        study: "noisy".into(),
        problem: problem.spec.clone(),
        upsilon: k.upsilon(),
        gamma: k.gamma(),
        dim: k.dim(),
        seed: cfg.seed,
        sizes: rows,
        dropped,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaLimitConfig {
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Points of the parameter grid, used both by the search and by the oracle.
    pub theta_points: usize,
    pub lambda_c: f64,
    pub lambda_exponent: Option<f64>,
    /// Grid points per dimension of the dense design used by the oracle.
    pub oracle_points: usize,
    pub jitter: f64,
    pub refine_passes: usize,
}

impl Default for ThetaLimitConfig {
    fn default() -> Self {
        ThetaLimitConfig {
            sizes: vec![64, 128, 256, 512],
            seed: 0,
            theta_points: 64,
            lambda_c: 1.0,
            lambda_exponent: None,
            oracle_points: 201,
            jitter: DEFAULT_JITTER,
            refine_passes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaLimitRow {
    pub n: usize,
    pub theta_hat: Vec<f64>,
    /// Euclidean distance to the oracle minimizer.
    pub gap: f64,
    /// `gap` in units of the largest parameter-grid cell.
    pub gap_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaLimitReport {
    pub problem: ProblemSpec,
    pub seed: u64,
    pub cell: f64,
    pub theta_star: ThetaStar,
    /// Grid minimizer refined by the parabola through its neighbours (scalar parameters only).
    pub theta_prime: Vec<f64>,
    pub rows: Vec<ThetaLimitRow>,
}

/// Vertex of the parabola through the grid minimum and its two neighbours.
/// Exact when the squared norm is quadratic in `theta`, as for models linear in `theta`.
pub fn parabolic_vertex(grid: &PointSet, star: &ThetaStar) -> Vec<f64> {
    let i = star.index;
    if grid.dim() != 1 || i == 0 || i + 1 >= grid.len() {
        return star.theta.clone();
    }
    let (x0, x1, x2) = (grid.point(i - 1)[0], grid.point(i)[0], grid.point(i + 1)[0]);
    let (f0, f1, f2) = (star.norms_sq[i - 1], star.norms_sq[i], star.norms_sq[i + 1]);
    let denom = (x0 - x1) * (f0 - f2) - (x0 - x2) * (f0 - f1);
    let num = (x0 - x1).powi(2) * (f0 - f2) - (x0 - x2).powi(2) * (f0 - f1);
    if denom == 0.0 {
        return star.theta.clone();
    }
    let v = x0 - 0.5 * num / denom;
    vec![v.clamp(x0, x2)]
}

/// `theta_hat_KO(n)` against the native-norm minimizer over the parameter grid.
pub fn run_theta_limit_study(
    problem: &SyntheticProblem,
    k: &MaternKernel,
    cfg: &ThetaLimitConfig,
) -> Result<ThetaLimitReport> {
    if cfg.theta_points < 2 {
        return Err(Error::invalid("the parameter grid needs at least 2 points per dimension"));
    }
    let sizes = ladder(&cfg.sizes);
    let grid = problem.theta_domain.grid(cfg.theta_points);
    let dense = Design::new(problem.domain.grid(cfg.oracle_points), problem.domain.clone())?;
    let zeta = problem.zeta.clone();
    let star = theta_star_oracle(problem.model.as_ref(), &move |x: &[f64]| zeta(x), k, &dense, &grid, cfg.jitter)?;
    let theta_prime = parabolic_vertex(&grid, &star);
    let cell = (0..problem.theta_domain.dim())
        .map(|j| problem.theta_domain.width(j) / (cfg.theta_points - 1) as f64)
        .fold(0.0, f64::max);
    let search = SearchConfig {
        grid_points: cfg.theta_points,
        refine_passes: cfg.refine_passes,
        ..SearchConfig::default()
    };
    let rows = par::map_range(sizes.len(), |s| -> Result<ThetaLimitRow> {
        let n = sizes[s];
        let seed = derive_seed(cfg.seed, &[s as u64, 0]);
        let seed = derive_seed(seed, &[n as u64]);
        let design = make_design(DesignKind::UniformRandom, n, &problem.domain, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        let noise = Normal::new(0.0, problem.sigma0_sq.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
        let yp = DVector::from_iterator(n, design.points().iter().map(|x| (problem.zeta)(x) + noise.sample(&mut rng)));
        let lambda = smoothing_schedule(n, k, cfg.lambda_c, cfg.lambda_exponent);
        let cp = CalibrationProblem::new(design, yp, problem.model.clone(), problem.theta_domain.clone(), *k, lambda)?
            .with_jitter(cfg.jitter)?;
        let fit = calibrate(&cp, &search)?;
        let gap = fit
            .theta_hat
            .iter()
            .zip(&theta_prime)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(ThetaLimitRow {
            n,
            theta_hat: fit.theta_hat,
            gap,
            gap_cells: if cell > 0.0 { gap / cell } else { 0.0 },
        })
    });
    Ok(ThetaLimitReport {
        problem: problem.spec.clone(),
        seed: cfg.seed,
        cell,
        theta_star: star,
        theta_prime,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_exponent_arithmetic() {
        let t = TargetExponents::new(1.0, 1);
        assert_eq!(t.l2, 0.375);
        assert_eq!(t.linf, 0.25);
        assert_eq!(t.empirical_mse, 0.75);
        let t2 = TargetExponents::new(2.0, 2);
        assert_eq!(t2.l2, 3.0 / 8.0);
        assert_eq!(t2.linf, 2.0 / 8.0);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let dom = Domain::unit(2);
        let w = trapezoid_weights(&dom, 11);
        let g = dom.grid(11);
        let integral: f64 = g.iter().zip(&w).map(|(x, w)| w * (x[0] + 2.0 * x[1])).sum();
        assert!((integral - 1.5).abs() < 1e-12);
    }

    #[test]
    fn parabola_vertex_recovers_quadratic_minimum() {
        let grid = Domain::new(vec![(-1.0, 1.0)]).unwrap().grid(9);
        let norms_sq: Vec<f64> = grid.iter().map(|t| 3.0 * (t[0] - 0.31).powi(2) + 0.5).collect();
        let star = ThetaStar {
            theta: vec![0.25],
            index: 5,
            norms_sq,
        };
        let v = parabolic_vertex(&grid, &star);
        assert!((v[0] - 0.31).abs() < 1e-12);
    }

    #[test]
    fn per_axis_counts() {
        assert_eq!(per_axis(4096, 1), 4096);
        assert_eq!(per_axis(4096, 2), 64);
        assert_eq!(per_axis(1000, 3), 10);
        assert_eq!(per_axis(3, 4), 2);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
