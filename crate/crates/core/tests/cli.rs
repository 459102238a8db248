mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn kocal(args: &[&str], cwd: &Path) -> Output {
    Command::new(common::kocal())
        .args(args)
        .current_dir(cwd)
        .env_remove("KO_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fit_without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn calibrate_on_builtin_problem_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = kocal(&["calibrate", "--problem", "trig", "--n", "20", "-o", "run", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.toml", "data.csv", "discrepancy.csv", "fit.json"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    assert!(stdout(&o).contains("theta_hat"));
}

#[test]
fn manifest_reproduces_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = kocal(&["calibrate", "--problem", "kernel-translate", "--n", "24", "-o", "a", "--seed", "11"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kocal(&["calibrate", "-c", "a/manifest.toml", "-o", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fit_without_timestamp(&dir.path().join("a/fit.json")), fit_without_timestamp(&dir.path().join("b/fit.json")));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, out: &str| {
        let mut c = Command::new(common::kocal());
        c.args(["calibrate", "--problem", "trig", "--n", "20", "-o", out]).current_dir(dir.path()).env_remove("KO_SEED");
        if let Some(s) = env {
            c.env("KO_SEED", s);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fit_without_timestamp(&dir.path().join(out).join("fit.json"))
    };
    let env9 = run(Some("9"), "e9");
    let flag9 = {
        let o = kocal(&["calibrate", "--problem", "trig", "--n", "20", "-o", "f9", "--seed", "9"], dir.path());
        assert!(o.status.success());
        fit_without_timestamp(&dir.path().join("f9/fit.json"))
    };
    assert_eq!(env9, flag9);
    assert_ne!(run(None, "none"), env9);

    let mut c = Command::new(common::kocal());
    let o = c
        .args(["calibrate", "--problem", "trig", "--n", "20", "-o", "bad"])
        .current_dir(dir.path())
        .env("KO_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_with_empty_query_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    assert!(kocal(&["calibrate", "--problem", "trig", "--n", "20", "-o", "r"], dir.path()).status.success());
    std::fs::write(dir.path().join("q.csv"), "x1\n").unwrap();
    let o = kocal(&["predict", "--fit", "r/fit.json", "--query", "q.csv", "-o", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("r/predictions.csv")).unwrap();
    assert_eq!(text.trim(), "x1,mean,variance");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // Data error: missing file.
    let o = kocal(&["calibrate", "--data", "absent.csv", "--problem", "dot"], p);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // Configuration error: unknown key.
    std::fs::write(p.join("bad.toml"), "no_such_key = 1\n").unwrap();
    let o = kocal(&["calibrate", "-c", "bad.toml"], p);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // Configuration error: burn-in swallows the chain.
    let o = kocal(&["mcmc", "--problem", "trig", "--n", "20", "--iterations", "10", "--burn-in", "10"], p);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // Configuration error: smoothness below the theory.
    let o = kocal(&["rates", "--study", "noiseless", "--upsilon", "0.5", "-o", "r"], p);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // Numerical failure: a slope needs two sizes.
    let o = kocal(&["rates", "--study", "noiseless", "--sizes", "16", "-o", "r"], p);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    // Usage error from the argument parser.
    let o = kocal(&["calibrate", "--seed", "minus-one"], p);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mcmc_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = kocal(
            &["mcmc", "--problem", "trig", "--n", "20", "--iterations", "400", "--burn-in", "100", "--seed", "2", "-o", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("acceptance"));
    }
    let a = std::fs::read(dir.path().join("a/chain.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/chain.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/chain_meta.json").exists());
}

#[test]
fn noiseless_rates_print_pass_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = kocal(&["rates", "--study", "noiseless", "--sizes", "8,16,32,64", "-o", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{text}");
    assert!(dir.path().join("r/rates.json").exists());
    assert!(dir.path().join("r/rates.csv").exists());
}

#[test]
fn theta_limit_study_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = kocal(&["rates", "--study", "theta-limit", "--sizes", "64,256", "-o", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("PASS theta gap")), "{}", stdout(&o));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = kocal(&["selftest", "-o", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

fn external_config(dir: &Path, extra: &str) {
    let mut data = String::from("x1,yp\n");
    for i in 0..12 {
        let x = i as f64 / 11.0;
        data.push_str(&format!("{x},{}\n", 0.8 * x + 0.1 * (7.0 * x).sin()));
    }
    std::fs::write(dir.join("data.csv"), data).unwrap();
    let cfg = format!(
        "[simulator]\ncommand = [{:?}{extra}]\ndim_x = 1\ntheta_lo = [-2.0]\ntheta_hi = [2.0]\n\n[data]\nfile = \"data.csv\"\n",
        common::echo_sim()
    );
    std::fs::write(dir.join("sim.toml"), cfg).unwrap();
}

#[test]
fn external_simulator_calibrates() {
    let dir = tempfile::tempdir().unwrap();
    external_config(dir.path(), "");
    let o = kocal(&["calibrate", "-c", "sim.toml", "-o", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = fit_without_timestamp(&dir.path().join("r/fit.json"));
    let theta = fit["theta_hat"][0].as_f64().unwrap();
    assert!((theta - 0.8).abs() < 0.3, "theta_hat {theta}");
}

#[test]
fn simulator_errors_are_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    external_config(dir.path(), ", \"--fail\", \"out of domain\"");
    let o = kocal(&["calibrate", "-c", "sim.toml", "-o", "r"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("out of domain"), "{}", stderr(&o));

    external_config(dir.path(), ", \"--exit-after\", \"3\"");
    let o = kocal(&["calibrate", "-c", "sim.toml", "-o", "r"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn echo_simulator_speaks_the_protocol() {
    let mut child = Command::new(common::echo_sim())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"EVAL 1 2\nHELLO 1 1\nEVAL 0.5 3\nEVAL 1\nBOGUS\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let lines: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert!(lines[0].starts_with("ERR"));
    assert_eq!(lines[1], "READY");
    let v: f64 = lines[2].strip_prefix("OK ").unwrap().trim().parse().unwrap();
    assert_eq!(v, 1.5);
    assert!(lines[3].starts_with("ERR"));
    assert!(lines[4].starts_with("ERR"));
}
