mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use ko_calib::design::{Design, Domain, PointSet};
use ko_calib::experiments::{
    fit_loglog_slope, make_design, run_rate_study_noiseless, DesignKind, NoiselessConfig, ProblemSpec,
};
use ko_calib::kernel::{gram, MaternKernel, DEFAULT_JITTER};
use ko_calib::model::{shared, FnModel};
use ko_calib::native::interpolate;
use ko_calib::regress::{calibrate, predict, CalibrationProblem, SearchConfig};

fn upsilon() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(2.5)]
}

fn points(d: usize, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), n)
}

fn spaced(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded(v in upsilon(), gamma in 0.1..8.0f64, a in points(2, 1..=1), b in points(2, 1..=1)) {
        let k = MaternKernel::new(v, gamma, 2).unwrap();
        let ab = ko_calib::kernel::matern(&a[0], &b[0], &k).unwrap();
        let ba = ko_calib::kernel::matern(&b[0], &a[0], &k).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab > 0.0 && ab <= 1.0);
        prop_assert_eq!(ko_calib::kernel::matern(&a[0], &a[0], &k).unwrap(), 1.0);
    }

    #[test]
    fn kernel_matches_oracle(v in upsilon(), gamma in 0.1..8.0f64, r in 0.0..2.0f64) {
        let k = MaternKernel::new(v, gamma, 1).unwrap();
        let exact = common::matern(v, gamma, r);
        prop_assert!((k.correlation(r) - exact).abs() <= 1e-10, "{} vs {}", k.correlation(r), exact);
    }

    #[test]
    fn gram_is_positive_semidefinite(v in upsilon(), gamma in 0.5..6.0f64, pts in points(2, 2..=12)) {
        let k = MaternKernel::new(v, gamma, 2).unwrap();
        let mut ps = PointSet::empty(2);
        for p in &pts {
            if ps.iter().all(|q| ko_calib::design::distance(q, p) > 1e-6) {
                ps.push(p).unwrap();
            }
        }
        let design = Design::new(ps, Domain::unit(2)).unwrap();
        let g = gram(&design, &k, DEFAULT_JITTER).unwrap();
        let m = g.entries().clone();
        prop_assert_eq!(&m, &m.transpose());
        let eig = m.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10 * eig.amax());
    }

    #[test]
    fn interpolant_reproduces_node_values(v in upsilon(), n in 2..20usize, seed in any::<u64>()) {
        let pts = spaced(n);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let y = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let k = MaternKernel::new(v, n as f64, 1).unwrap();
        let design = Design::new(PointSet::from_rows(&pts, 1).unwrap(), Domain::unit(1)).unwrap();
        let s = interpolate(&design, &y, &k, DEFAULT_JITTER).unwrap();
        for (i, p) in pts.iter().enumerate() {
            prop_assert!((s.eval_point(p).unwrap() - y[i]).abs() <= 1e-8);
        }
    }

    #[test]
    fn slope_is_invariant_to_scale_and_order(slope in -3.0..3.0f64, scale in 1e-6..1e6f64, shift in 0usize..5) {
        let mut pts: Vec<(f64, f64)> = (0..5).map(|i| {
            let n = 8.0 * 2f64.powi(i);
            (n, n.powf(slope))
        }).collect();
        let base = fit_loglog_slope(&pts).unwrap().slope;
        pts.rotate_left(shift);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(n, e)| (n, scale * e)).collect();
        let fit = fit_loglog_slope(&scaled).unwrap();
        prop_assert!((fit.slope - base).abs() <= 1e-9);
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
    }

    #[test]
    fn predictive_variance_dominates_sigma2(n in 5..25usize, lambda in 0.01..2.0f64, seed in any::<u64>()) {
        let pts = spaced(n);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let yp = DVector::from_iterator(n, pts.iter().map(|x| (5.0 * x[0]).cos() + 0.1 * rand::Rng::random::<f64>(&mut rng)));
        let model = shared(FnModel::new("lin", |x: &[f64], t: &[f64]| t[0] * x[0]));
        let k = MaternKernel::new(1.5, 3.0, 1).unwrap();
        let design = Design::new(PointSet::from_rows(&pts, 1).unwrap(), Domain::unit(1)).unwrap();
        let problem = CalibrationProblem::new(design, yp, model, Domain::new(vec![(-2.0, 2.0)]).unwrap(), k, lambda).unwrap();
        let fit = calibrate(&problem, &SearchConfig::default()).unwrap();
        let q = PointSet::from_scalars(&ko_calib::design::linspace(0.0, 1.0, 17)).unwrap();
        let pred = predict(&fit, &problem, &q).unwrap();
        for v in pred.variance {
            prop_assert!(v >= fit.sigma2_hat * (1.0 - 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn uniform_designs_are_deterministic_and_inside(n in 1..200usize, d in 1..4usize, seed in any::<u64>()) {
        let domain = Domain::new(vec![(-1.0, 3.0); d]).unwrap();
        let a = make_design(DesignKind::UniformRandom, n, &domain, seed).unwrap();
        let b = make_design(DesignKind::UniformRandom, n, &domain, seed).unwrap();
        prop_assert_eq!(a.points().to_rows(), b.points().to_rows());
        prop_assert!(a.points().iter().all(|p| domain.contains(p)));
        prop_assert_eq!(a.len(), n);
    }

    #[test]
    fn rate_report_does_not_depend_on_size_order(perm in Just(vec![5usize, 17, 9, 33]).prop_shuffle()) {
        let problem = ProblemSpec::kernel_translate(1, 1.0, 1.0).build().unwrap();
        let k = MaternKernel::new(1.0, 1.0, 1).unwrap();
        let cfg = NoiselessConfig { sizes: vec![5, 9, 17, 33], query_points: 513, theta_points: 3, ..NoiselessConfig::default() };
        let sorted = run_rate_study_noiseless(&problem, &k, &cfg).unwrap();
        let shuffled = run_rate_study_noiseless(&problem, &k, &NoiselessConfig { sizes: perm, ..cfg }).unwrap();
        prop_assert_eq!(&sorted.to_json().unwrap(), &shuffled.to_json().unwrap());
        // Nested grids: each refinement contains the previous design, so the sup error cannot grow.
        let med: Vec<f64> = sorted.sizes.iter().map(|r| r.metric("mean_sup_error").unwrap().median).collect();
        prop_assert!(med.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{:?}", med);
    }
}
