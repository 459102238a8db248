use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use ko_calib::design::{Design, Domain, PointSet};
use ko_calib::experiments::{run_rate_study_noiseless, NoiselessConfig, ProblemSpec};
use ko_calib::kernel::MaternKernel;
use ko_calib::model::{shared, FnModel};
use ko_calib::par::{current_threads, with_threads};
use ko_calib::regress::{calibrate, smoothing_schedule, CalibrationProblem, SearchConfig};

fn calibration_problem(n: usize) -> CalibrationProblem {
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let yp = DVector::from_iterator(n, xs.iter().map(|x| (6.0 * x).sin() + 0.4 * x));
    let model = shared(FnModel::new("lin", |x: &[f64], t: &[f64]| t[0] * x[0]));
    let k = MaternKernel::new(1.5, 2.0, 1).unwrap();
    let design = Design::new(PointSet::from_scalars(&xs).unwrap(), Domain::unit(1)).unwrap();
    let lambda = smoothing_schedule(n, &k, 1.0, None);
    CalibrationProblem::new(design, yp, model, Domain::new(vec![(-2.0, 2.0)]).unwrap(), k, lambda).unwrap()
}

fn bench_calibrate(c: &mut Criterion) {
    let mut group = c.benchmark_group("calibrate");
    group.sample_size(10);
    let search = SearchConfig::default();
    for n in [64, 256] {
        let problem = calibration_problem(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &problem, |b, p| {
            b.iter(|| with_threads(1, || calibrate(p, &search).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new(format!("pool-{}", current_threads()), n), &problem, |b, p| {
            b.iter(|| calibrate(p, &search).unwrap())
        });
    }
    group.finish();
}

fn bench_noiseless_study(c: &mut Criterion) {
    let mut group = c.benchmark_group("noiseless-study");
    group.sample_size(10);
    let problem = ProblemSpec::kernel_translate(1, 1.0, 1.0).build().unwrap();
    let k = MaternKernel::new(1.0, 1.0, 1).unwrap();
    let cfg = NoiselessConfig {
        sizes: vec![8, 16, 32, 64],
        query_points: 1024,
        ..NoiselessConfig::default()
    };
    group.bench_function("sequential", |b| {
        b.iter(|| with_threads(1, || run_rate_study_noiseless(&problem, &k, &cfg).unwrap()))
    });
    group.bench_function(format!("pool-{}", current_threads()), |b| {
        b.iter(|| run_rate_study_noiseless(&problem, &k, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_calibrate, bench_noiseless_study);
criterion_main!(benches);
