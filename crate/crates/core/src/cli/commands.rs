use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{KernelConfig, RunConfig, SimulatorConfig, Study};
use super::data::{read_data, read_query, write_table};
use super::simulator::ExternalModel;
use super::CliError;
use crate::bayes::{
    predictive_summary, run_mcmc, write_chain_csv, write_chain_meta, BayesData, Interval, McmcConfig, PriorSpec,
    Sigma2Prior,
};
use crate::design::{Design, Domain, PointSet};
use crate::experiments::{
    make_design, run_rate_study_noiseless, run_rate_study_noisy, run_theta_limit_study, DesignKind, NoiselessConfig,
    NoisyConfig, ProblemSpec, SyntheticProblem, ThetaLimitConfig,
};
use crate::kernel::MaternKernel;
use crate::model::{eval_points, SharedModel};
use crate::par::derive_seed;
use crate::regress::{calibrate, predict, smoothing_schedule, CalibrationFit, CalibrationProblem, Prediction};

/// Everything `predict` needs, as written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub problem: Option<ProblemSpec>,
    pub simulator: Option<SimulatorConfig>,
    pub kernel: KernelConfig,
    pub jitter: f64,
    pub domain: Vec<(f64, f64)>,
    pub theta_domain: Vec<(f64, f64)>,
    pub design: Vec<Vec<f64>>,
    pub yp: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub lambda: f64,
    pub sigma2_hat: f64,
    pub tau2_hat: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub alpha: Vec<f64>,
    pub delta_hat: Vec<f64>,
}

impl FitFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn fit(&self) -> CalibrationFit {
        CalibrationFit {
            theta_hat: self.theta_hat.clone(),
            alpha: self.alpha.clone(),
            delta_hat: self.delta_hat.clone(),
            lambda: self.lambda,
            sigma2_hat: self.sigma2_hat,
            objective: self.objective,
            evaluations: self.evaluations,
        }
    }

    /// Rebuilds the calibration problem the fit came from.
    pub fn problem(&self) -> Result<CalibrationProblem, CliError> {
        let (model, _) = model_from(self.problem.as_ref(), self.simulator.as_ref())?;
        let d = self.domain.len();
        let points = PointSet::from_rows(&self.design, d).map_err(|e| CliError::Data(format!("fit file: {e}")))?;
        let design = Design::new(points, Domain::new(self.domain.clone())?)?;
        let k = MaternKernel::new(self.kernel.upsilon, self.kernel.gamma, d)?;
        Ok(CalibrationProblem::new(
            design,
            DVector::from_vec(self.yp.clone()),
            model,
            Domain::new(self.theta_domain.clone())?,
            k,
            self.lambda,
        )?
        .with_jitter(self.jitter)?)
    }
}

fn model_from(
    problem: Option<&ProblemSpec>,
    simulator: Option<&SimulatorConfig>,
) -> Result<(SharedModel, Option<SyntheticProblem>), CliError> {
    match (problem, simulator) {
        (Some(spec), None) => {
            let p = spec.build().map_err(|e| CliError::Config(e.to_string()))?;
            Ok((p.model.clone(), Some(p)))
        }
        (None, Some(s)) => {
            let m = ExternalModel::spawn(&s.command, s.dim_x, s.theta_lo.len(), s.lanes, s.stateless)?;
            Ok((std::sync::Arc::new(m), None))
        }
        (None, None) => Err(CliError::Config("no model: set [problem], [simulator] or --problem".into())),
        (Some(_), Some(_)) => Err(CliError::Config("set either [problem] or [simulator], not both".into())),
    }
}

struct Setup {
    model: SharedModel,
    theta_domain: Domain,
    design: Design,
    yp: DVector<f64>,
}

fn input_dim(cfg: &RunConfig) -> Option<usize> {
    cfg.problem.as_ref().map(|p| p.dim()).or(cfg.simulator.as_ref().map(|s| s.dim_x))
}

fn bounding_box(points: &PointSet) -> Result<Domain, CliError> {
    let bounds = (0..points.dim())
        .map(|k| {
            points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])))
        })
        .collect();
    Ok(Domain::new(bounds)?)
}

fn setup(cfg: &RunConfig, seed: u64) -> Result<Setup, CliError> {
    let (model, problem) = model_from(cfg.problem.as_ref(), cfg.simulator.as_ref())?;
    let theta_domain = match (&problem, &cfg.simulator) {
        (Some(p), _) => p.theta_domain.clone(),
        (None, Some(s)) => Domain::from_slices(&s.theta_lo, &s.theta_hi).map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => unreachable!("model_from rejects a missing model"),
    };
    let configured_domain = match &cfg.data.domain {
        Some(b) => Some(Domain::new(b.iter().map(|r| (r[0], r[1])).collect()).map_err(|e| CliError::Config(e.to_string()))?),
        None => None,
    };
    let (design, yp) = if let Some(path) = &cfg.data.file {
        let (points, yp) = read_data(path, input_dim(cfg))?;
        let domain = match (configured_domain, &problem) {
            (Some(d), _) => d,
            (None, Some(p)) => p.domain.clone(),
            (None, None) => bounding_box(&points)?,
        };
        (Design::new(points, domain).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?, yp)
    } else if let Some(n) = cfg.data.n {
        let p = problem
            .as_ref()
            .ok_or_else(|| CliError::Config("data.n simulates data and needs a built-in [problem]".into()))?;
        let domain = configured_domain.unwrap_or_else(|| p.domain.clone());
        let kind = cfg.data.design.unwrap_or(DesignKind::UniformRandom);
        let design = make_design(kind, n, &domain, derive_seed(seed, &[0]))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        let noise = Normal::new(0.0, p.sigma0_sq.sqrt()).map_err(|e| CliError::Config(e.to_string()))?;
        let yp = design.points().iter().map(|x| (p.zeta)(x) + noise.sample(&mut rng)).collect();
        (design, yp)
    } else {
        return Err(CliError::Config("no data: set data.file, data.n or --data".into()));
    };
    Ok(Setup {
        model,
        theta_domain,
        design,
        yp: DVector::from_vec(yp),
    })
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| CliError::Data(format!("{}: {e}", cfg.output.display())))?;
    let text = cfg.to_toml()?;
    write_file(&cfg.output.join("manifest.toml"), &text)?;
    Ok(cfg.output.clone())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn calibration_problem(cfg: &RunConfig, s: &Setup) -> Result<CalibrationProblem, CliError> {
    let k = MaternKernel::new(cfg.kernel.upsilon, cfg.kernel.gamma, s.design.dim())?;
    let lambda = cfg
        .lambda
        .value
        .unwrap_or_else(|| smoothing_schedule(s.design.len(), &k, cfg.lambda.c, cfg.lambda.exponent));
    Ok(CalibrationProblem::new(
        s.design.clone(),
        s.yp.clone(),
        s.model.clone(),
        s.theta_domain.clone(),
        k,
        lambda,
    )?
    .with_jitter(cfg.jitter)?)
}

/// Writes `fit.json`, `discrepancy.csv` (and `data.csv` for simulated data).
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<FitFile, CliError> {
    let seed = seed(cfg);
    let s = setup(cfg, seed)?;
    let out = prepare_output(cfg)?;
    if cfg.data.file.is_none() {
        write_table(&out.join("data.csv"), s.design.points(), &["yp"], &[s.yp.as_slice()])?;
    }
    let cp = calibration_problem(cfg, &s)?;
    let fit = calibrate(&cp, &cfg.search)?;
    let ys = eval_points(s.model.as_ref(), s.design.points(), &fit.theta_hat)?;
    write_table(
        &out.join("discrepancy.csv"),
        s.design.points(),
        &["yp", "ys", "delta"],
        &[s.yp.as_slice(), ys.as_slice(), &fit.delta_hat],
    )?;
    let file = FitFile {
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        problem: cfg.problem.clone(),
        simulator: cfg.simulator.clone(),
        kernel: cfg.kernel,
        jitter: cfg.jitter,
        domain: s.design.domain().bounds().to_vec(),
        theta_domain: s.theta_domain.bounds().to_vec(),
        design: s.design.points().to_rows(),
        yp: s.yp.as_slice().to_vec(),
        theta_hat: fit.theta_hat.clone(),
        lambda: fit.lambda,
        sigma2_hat: fit.sigma2_hat,
        tau2_hat: fit.tau2(),
        objective: fit.objective,
        evaluations: fit.evaluations,
        alpha: fit.alpha.clone(),
        delta_hat: fit.delta_hat.clone(),
    };
    write_json(&out.join("fit.json"), &file)?;
    println!(
        "theta_hat = {:?}, lambda = {:e}, sigma2_hat = {:e}, objective = {:e}",
        fit.theta_hat, fit.lambda, fit.sigma2_hat, fit.objective
    );
    Ok(file)
}

/// Writes `predictions.csv` with columns `x1..xd, mean, variance`.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Prediction, CliError> {
    let fit_path = cfg
        .predict
        .fit
        .as_ref()
        .ok_or_else(|| CliError::Config("predict needs --fit or predict.fit".into()))?;
    let query_path = cfg
        .predict
        .query
        .as_ref()
        .ok_or_else(|| CliError::Config("predict needs --query or predict.query".into()))?;
    let file = FitFile::read(fit_path)?;
    let problem = file.problem()?;
    let fit = file.fit();
    if fit.alpha.len() != problem.design().len() || fit.theta_hat.len() != problem.theta_domain().dim() {
        return Err(CliError::Data(format!("{}: inconsistent fit file", fit_path.display())));
    }
    let query = read_query(query_path, problem.design().dim())?;
    let out = prepare_output(cfg)?;
    let pred = if query.is_empty() {
        Prediction {
            mean: Vec::new(),
            variance: Vec::new(),
        }
    } else {
        predict(&fit, &problem, &query)?
    };
    write_table(
        &out.join("predictions.csv"),
        &query,
        &["mean", "variance"],
        &[&pred.mean, &pred.variance],
    )?;
    Ok(pred)
}

fn interval(b: Option<[f64; 2]>, fallback: Interval) -> Result<Interval, CliError> {
    match b {
        Some([lo, hi]) => Interval::new(lo, hi).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(fallback),
    }
}

/// Writes `chain.csv`, `chain_meta.json` and `predictive.csv`.
pub fn cmd_mcmc(cfg: &RunConfig) -> Result<crate::bayes::PosteriorChain, CliError> {
    let seed = seed(cfg);
    let s = setup(cfg, seed)?;
    let out = prepare_output(cfg)?;
    if cfg.data.file.is_none() {
        write_table(&out.join("data.csv"), s.design.points(), &["yp"], &[s.yp.as_slice()])?;
    }
    let mut data = BayesData::new(s.design.clone(), s.yp.clone(), s.model.clone(), cfg.kernel.upsilon)?;
    data.jitter = cfg.jitter;
    let m = &cfg.mcmc;
    let theta = match &m.theta {
        Some(b) => Domain::new(b.iter().map(|r| (r[0], r[1])).collect()).map_err(|e| CliError::Config(e.to_string()))?,
        None => s.theta_domain.clone(),
    };
    let defaults = PriorSpec::default_for(theta.clone(), s.yp.as_slice());
    let sigma2 = match (m.sigma2, m.sigma2_flat) {
        (Some(b), _) => Sigma2Prior::Uniform(interval(Some(b), Interval::point(1.0)?)?),
        (None, true) => Sigma2Prior::Flat,
        (None, false) => defaults.sigma2,
    };
    let prior = PriorSpec::new(theta, interval(m.tau2, defaults.tau2)?, sigma2, interval(m.gamma, defaults.gamma)?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mc = McmcConfig {
        iterations: m.iterations,
        burn_in: m.burn_in,
        thin: m.thin,
        seed,
        scales: m.scales.clone(),
        adapt: m.adapt,
        ..McmcConfig::default()
    };
    let chain = run_mcmc(&data, &prior, &mc).map_err(|e| match e {
        crate::error::Error::InvalidInput(msg) => CliError::Config(msg),
        e => e.into(),
    })?;
    write_chain_csv(&chain, &out.join("chain.csv"))?;
    write_chain_meta(&chain, &out.join("chain_meta.json"))?;
    let query = match &m.query {
        Some(path) => read_query(path, s.design.dim())?,
        None => s.design.points().clone(),
    };
    let summary = if query.is_empty() {
        Vec::new()
    } else {
        predictive_summary(&chain, &data, &query, derive_seed(seed, &[2]))?
    };
    let col = |f: fn(&crate::bayes::PredictiveSummary) -> f64| summary.iter().map(f).collect::<Vec<f64>>();
    write_table(
        &out.join("predictive.csv"),
        &query,
        &["mean", "lo90", "hi90"],
        &[&col(|p| p.mean), &col(|p| p.lo90), &col(|p| p.hi90)],
    )?;
    for w in &chain.warnings {
        eprintln!("kocal: warning: {w}");
    }
    for (b, rate) in &chain.acceptance {
        if let Some(r) = rate {
            println!("acceptance {} = {r:.3}", b.name());
        }
    }
    Ok(chain)
}

/// Result of `cmd_rates`, one variant per study.
#[derive(Debug, Clone)]
pub enum RatesOutcome {
    Rates(crate::experiments::RateReport),
    ThetaLimit(crate::experiments::ThetaLimitReport, bool),
}

/// Runs the configured study, writes its JSON and CSV and prints PASS/FAIL lines.
pub fn cmd_rates(cfg: &RunConfig) -> Result<RatesOutcome, CliError> {
    if cfg.simulator.is_some() {
        return Err(CliError::Config("rate studies need a built-in problem".into()));
    }
    let spec = cfg
        .problem
        .clone()
        .unwrap_or_else(|| ProblemSpec::kernel_translate(1, cfg.kernel.upsilon, cfg.kernel.gamma));
    let problem = spec.build().map_err(|e| CliError::Config(e.to_string()))?;
    let k = MaternKernel::new(cfg.kernel.upsilon, cfg.kernel.gamma, problem.domain.dim())?;
    let r = &cfg.rates;
    let seed = seed(cfg);
    let out = prepare_output(cfg)?;
    let sizes = r.sizes.clone().unwrap_or_default();
    match r.study {
        Study::Noiseless => {
            let d = NoiselessConfig::default();
            let sc = NoiselessConfig {
                sizes,
                design: r.design.unwrap_or(d.design),
                theta_points: r.theta_points.unwrap_or(d.theta_points),
                query_points: r.query_points.unwrap_or(d.query_points),
                replicates: r.replicates.unwrap_or(d.replicates),
                seed,
                jitter: r.jitter.unwrap_or(d.jitter),
                slack: r.slack.unwrap_or(d.slack),
            };
            let report = run_rate_study_noiseless(&problem, &k, &sc)?;
            finish_rates(&out, report)
        }
        Study::Noisy => {
            let d = NoisyConfig::default();
            let sc = NoisyConfig {
                sizes,
                replicates: r.replicates.unwrap_or(d.replicates),
                seed,
                lambda_c: cfg.lambda.c,
                lambda_exponent: cfg.lambda.exponent,
                query_points: r.query_points.unwrap_or(d.query_points),
                search: cfg.search,
                jitter: cfg.jitter,
                tolerance: r.tolerance.unwrap_or(d.tolerance),
                sigma_slope_max: r.sigma_slope_max.unwrap_or(d.sigma_slope_max),
            };
            let report = run_rate_study_noisy(&problem, &k, &sc)?;
            finish_rates(&out, report)
        }
        Study::ThetaLimit => {
            let d = ThetaLimitConfig::default();
            let sc = ThetaLimitConfig {
                sizes,
                seed,
                theta_points: r.theta_points.unwrap_or(d.theta_points),
                lambda_c: cfg.lambda.c,
                lambda_exponent: cfg.lambda.exponent,
                oracle_points: r.oracle_points.unwrap_or(d.oracle_points),
                jitter: cfg.jitter,
                refine_passes: cfg.search.refine_passes,
            };
            let report = run_theta_limit_study(&problem, &k, &sc)?;
            write_json(&out.join("theta_limit.json"), &report)?;
            for row in &report.rows {
                println!(
                    "n = {}: theta_hat = {:?}, |theta_hat - theta'| = {:.3e} ({:.3} cells)",
                    row.n, row.theta_hat, row.gap, row.gap_cells
                );
            }
            let last = report.rows.last().ok_or_else(|| CliError::Config("rates.sizes is empty".into()))?;
            let pass = last.gap_cells <= r.max_gap_cells;
            println!(
                "{} theta gap at n = {} is {:.3} cells (limit {}), theta' = {:?}",
                if pass { "PASS" } else { "FAIL" },
                last.n,
                last.gap_cells,
                r.max_gap_cells,
                report.theta_prime
            );
            Ok(RatesOutcome::ThetaLimit(report, pass))
        }
    }
}

fn finish_rates(out: &Path, report: crate::experiments::RateReport) -> Result<RatesOutcome, CliError> {
    write_file(&out.join("rates.json"), &(report.to_json()? + "\n"))?;
    report.write_csv(&out.join("rates.csv"))?;
    for d in &report.dropped {
        println!("DROPPED n = {}: {}", d.n, d.reason);
    }
    for line in report.lines() {
        println!("{line}");
    }
    Ok(RatesOutcome::Rates(report))
}

/// Prints one line per check; any failure is a numerical failure.
pub fn cmd_selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare_output(cfg)?;
    let checks = crate::selftest::run_all(seed(cfg));
    let mut failed = 0;
    let mut lines = Vec::new();
    for c in &checks {
        let line = format!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        println!("{line}");
        lines.push(line);
        failed += usize::from(!c.pass);
    }
    write_file(&out.join("selftest.txt"), &(lines.join("\n") + "\n"))?;
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} of {} self-test checks failed", checks.len())));
    }
    Ok(())
}
