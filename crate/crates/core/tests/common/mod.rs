#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `K_nu(z)` from `int_0^inf exp(-z cosh t) cosh(nu t) dt` by the trapezoid rule,
/// which converges geometrically for this integrand.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    let t_max = (2.0 / z).ln().max(0.0) + 12.0;
    let h = 0.004;
    let steps = (t_max / h).ceil() as usize;
    let mut s = 0.5 * (-z).exp();
    for i in 1..=steps {
        let t = i as f64 * h;
        s += (-z * t.cosh()).exp() * (nu * t).cosh();
    }
    s * h
}

fn gamma_fn(v: f64) -> f64 {
    // Only the orders used by the tests.
    match v {
        v if v == 1.0 || v == 2.0 => 1.0,
        v if v == 3.0 => 2.0,
        v if v == 0.5 => std::f64::consts::PI.sqrt(),
        v if v == 1.5 => std::f64::consts::PI.sqrt() / 2.0,
        v if v == 2.5 => 3.0 * std::f64::consts::PI.sqrt() / 4.0,
        v => panic!("no gamma value for {v}"),
    }
}

/// Matern correlation with `z = 2 sqrt(v) gamma r`.
pub fn matern(v: f64, gamma: f64, r: f64) -> f64 {
    let z = 2.0 * v.sqrt() * gamma * r;
    if z == 0.0 {
        return 1.0;
    }
    if v == 0.5 {
        return (-z).exp();
    }
    if v == 1.5 {
        return (1.0 + z) * (-z).exp();
    }
    if v == 2.5 {
        return (1.0 + z + z * z / 3.0) * (-z).exp();
    }
    z.powf(v) * bessel_k(v, z) / (gamma_fn(v) * 2f64.powf(v - 1.0))
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn gram(points: &[Vec<f64>], v: f64, gamma: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| matern(v, gamma, dist(&points[i], &points[j])))
}

pub fn cross(a: &[Vec<f64>], b: &[Vec<f64>], v: f64, gamma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| matern(v, gamma, dist(&a[i], &b[j])))
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().lu().solve(b).expect("singular system")
}

/// Ordinary least squares slope of `log y` on `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Rejection-sampled points in the unit box with pairwise distance at least `sep`.
pub fn separated_points<R: rand::Rng>(rng: &mut R, n: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut tries = 0;
    while pts.len() < n {
        tries += 1;
        assert!(tries < 1_000_000, "cannot place {n} points with separation {sep}");
        let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        if pts.iter().all(|q| dist(q, &p) >= sep) {
            pts.push(p);
        }
    }
    pts
}

pub fn kocal() -> &'static str {
    env!("CARGO_BIN_EXE_kocal")
}

pub fn echo_sim() -> &'static str {
    env!("CARGO_BIN_EXE_ko-echo-sim")
}

#[cfg(test)]
mod tests {
    #[test]
    fn oracle_matern_agrees_with_closed_forms() {
        // K_{1/2}(z) = sqrt(pi / (2z)) e^-z
        for &z in &[0.01, 0.3, 2.0, 9.0] {
            let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
            assert!((super::bessel_k(0.5, z) - exact).abs() < 1e-12 * exact.max(1.0));
        }
    }
}
