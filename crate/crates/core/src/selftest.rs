//! Fast invariant checks behind `kocal selftest`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayes::{gibbs_delta, log_posterior_cheap, BayesData, Interval, ParamState, PriorSpec, Sigma2Prior};
use crate::design::{Design, Domain, PointSet};
use crate::experiments::fit_loglog_slope;
use crate::kernel::{spectral_bounds, spectral_density, MaternKernel};
use crate::model::{shared, FnModel};
use crate::native::{inner_product, interpolate, NativeElement};
use crate::par::derive_seed;
use crate::regress::{calibrate, CalibrationProblem, SearchConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64, what: &str) -> SelfCheck {
    SelfCheck {
        name,
        pass: worst <= limit,
        detail: format!("worst {what} {worst:.3e} (limit {limit:.0e})"),
    }
}

fn failed(name: &'static str, e: crate::error::Error) -> SelfCheck {
    SelfCheck {
        name,
        pass: false,
        detail: e.to_string(),
    }
}

/// Random points in the unit box at least `sep * n^(-1/d)` apart.
fn spread_points(rng: &mut ChaCha8Rng, n: usize, d: usize, sep: f64) -> PointSet {
    let min_sep = sep * (n as f64).powf(-1.0 / d as f64);
    let mut pts = PointSet::empty(d);
    while pts.len() < n {
        let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        if pts.iter().all(|q| crate::design::distance(q, &p) >= min_sep) {
            pts.push(&p).expect("dimension matches");
        }
    }
    pts
}

fn interpolation_exactness(seed: u64) -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=2);
        let n = rng.random_range(2..=24);
        let k = MaternKernel::new([1.0, 1.5, 2.0, 2.5][rng.random_range(0..4)], rng.random_range(2.0..6.0), d).unwrap();
        let pts = spread_points(&mut rng, n, d, 0.3);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let design = Design::new(pts, Domain::unit(d)).unwrap();
        let s = match interpolate(&design, &y, &k, crate::kernel::DEFAULT_JITTER) {
            Ok(s) => s,
            Err(e) => return failed("interpolation exactness", e),
        };
        let scale = y.amax().max(1e-300);
        for (i, x) in design.points().iter().enumerate() {
            worst = worst.max((s.eval_point(x).unwrap() - y[i]).abs() / scale);
        }
    }
    check("interpolation exactness", worst, 1e-8, "relative node error")
}

fn pythagoras(seed: u64) -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = MaternKernel::new(1.5, 3.0, 1).unwrap();
        let centers = spread_points(&mut rng, 6, 1, 0.4);
        let f = NativeElement::new(k, centers, DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let design = Design::new(spread_points(&mut rng, 5, 1, 0.4), Domain::unit(1)).unwrap();
        let y = DVector::from_iterator(5, design.points().iter().map(|x| f.eval_point(x)));
        let s = interpolate(&design, &y, &k, 0.0).and_then(|s| {
            let s = s.element();
            let r = f.sub(&s)?;
            Ok((inner_product(&r, &s)?, r.norm_sq(), s.norm_sq()))
        });
        let (cross, rr, ss) = match s {
            Ok(v) => v,
            Err(e) => return failed("orthogonality and pythagoras", e),
        };
        let ff = f.norm_sq();
        worst = worst.max(cross.abs() / ff).max((rr + ss - ff).abs() / ff);
    }
    check("orthogonality and pythagoras", worst, 1e-6, "relative defect")
}

fn spectral_sandwich() -> SelfCheck {
    let mut worst: f64 = 0.0;
    for &v in &[1.0, 1.5, 2.0] {
        for d in 1..=2 {
            let (c1, c2) = spectral_bounds(v, 0.5, 4.0, d).unwrap();
            for gi in 0..5 {
                let g = 0.5 + 3.5 * gi as f64 / 4.0;
                let k = MaternKernel::new(v, g, d).unwrap();
                for wi in 0..20 {
                    let w = vec![10f64.powf(-2.0 + 5.0 * wi as f64 / 19.0); d];
                    let f = spectral_density(&w, &k).unwrap();
                    let base = (1.0 + w.iter().map(|x| x * x).sum::<f64>()).powf(-(v + d as f64 / 2.0));
                    worst = worst.max((c2 * base - f) / f).max((f - c1 * base) / f);
                }
            }
        }
    }
    check("spectral sandwich", worst.max(0.0), 1e-12, "relative violation")
}

/// The profiled objective equals the penalized criterion at the fitted discrepancy.
fn profile_identity(seed: u64) -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = rng.random_range(3..=8);
        let design = Design::new(spread_points(&mut rng, n, 1, 0.3), Domain::unit(1)).unwrap();
        let yp = DVector::from_iterator(n, design.points().iter().map(|x| (6.0 * x[0]).sin() + 0.1 * rng.random::<f64>()));
        let model = shared(FnModel::new("lin", |x: &[f64], t: &[f64]| t[0] * x[0]));
        let k = MaternKernel::new(1.5, 2.0, 1).unwrap();
        let lambda = rng.random_range(0.01..1.0);
        let result = CalibrationProblem::new(design, yp, model, Domain::new(vec![(-3.0, 3.0)]).unwrap(), k, lambda)
            .and_then(|p| {
                let fit = calibrate(&p, &SearchConfig::default())?;
                let r = p.residuals(&fit.theta_hat)?;
                let alpha = DVector::from_vec(fit.alpha.clone());
                let delta = DVector::from_vec(fit.delta_hat.clone());
                let direct = (&r - &delta).norm_squared() + lambda * alpha.dot(&delta);
                Ok((direct - fit.objective).abs() / fit.objective.abs().max(1e-300))
            });
        match result {
            Ok(v) => worst = worst.max(v),
            Err(e) => return failed("profile identity", e),
        }
    }
    check("profile identity", worst, 1e-8, "relative gap")
}

/// Differences of the joint log density in `delta` equal those of the Gibbs conditional.
fn gibbs_ratio(seed: u64) -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let design = Design::new(spread_points(&mut rng, n, 1, 0.4), Domain::unit(1)).unwrap();
    let yp = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let model = shared(FnModel::new("lin", |x: &[f64], t: &[f64]| t[0] * x[0]));
    let data = BayesData::new(design, yp, model, 1.5).unwrap();
    let prior = PriorSpec::new(
        Domain::new(vec![(-2.0, 2.0)]).unwrap(),
        Interval::new(0.1, 10.0).unwrap(),
        Sigma2Prior::Flat,
        Interval::new(0.5, 5.0).unwrap(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let state = ParamState {
            theta: vec![rng.random_range(-2.0..2.0)],
            tau2: rng.random_range(0.1..10.0),
            sigma2: rng.random_range(0.05..2.0),
            gamma: rng.random_range(0.5..5.0),
        };
        let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let res = gibbs_delta(&state, &data).and_then(|c| {
            let joint = log_posterior_cheap(&state, &a, &data, &prior)?.value() - log_posterior_cheap(&state, &b, &data, &prior)?.value();
            Ok((joint - (c.log_density(&a) - c.log_density(&b))).abs() / joint.abs().max(1.0))
        });
        match res {
            Ok(v) => worst = worst.max(v),
            Err(e) => return failed("gibbs conditional", e),
        }
    }
    check("gibbs conditional", worst, 1e-8, "log-ratio mismatch")
}

fn slope_recovery() -> SelfCheck {
    let pts: Vec<(f64, f64)> = (0..6).map(|i| 32.0 * 2f64.powi(i)).map(|n: f64| (n, 2.0 * n.powf(-0.375))).collect();
    match fit_loglog_slope(&pts) {
        Ok(f) => check("slope fit", (f.slope + 0.375).abs(), 1e-12, "slope error"),
        Err(e) => failed("slope fit", e),
    }
}

pub fn run_all(seed: u64) -> Vec<SelfCheck> {
    vec![
        interpolation_exactness(derive_seed(seed, &[1])),
        pythagoras(derive_seed(seed, &[2])),
        spectral_sandwich(),
        profile_identity(derive_seed(seed, &[3])),
        gibbs_ratio(derive_seed(seed, &[4])),
        slope_recovery(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all(7) {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
