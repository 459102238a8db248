use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub used: usize,
    /// Points dropped because the size or error was not positive.
    pub dropped: Vec<usize>,
}

/// Least squares of `log error` on `log size`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for (i, &(s, e)) in points.iter().enumerate() {
        if s > 0.0 && e > 0.0 && s.is_finite() && e.is_finite() {
            xs.push(s.ln());
            ys.push(e.ln());
        } else {
            dropped.push(i);
        }
    }
    let m = xs.len();
    if m < 3 {
        return Err(Error::SlopeFit(format!(
            "need at least 3 points with positive size and error, have {m}"
        )));
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::SlopeFit("all sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let stderr = (sse / (mf - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        used: m,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = [32.0, 64.0, 128.0, 256.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.375))).collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 0.375).abs() < 1e-12);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn constant_errors() {
        let f = fit_loglog_slope(&[(1.0, 2.0), (2.0, 2.0), (4.0, 2.0)]).unwrap();
        assert!(f.slope.abs() < 1e-14);
    }

    #[test]
    fn drops_nonpositive() {
        let f = fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (4.0, 0.25), (8.0, 0.125)]).unwrap();
        assert_eq!(f.dropped, vec![1]);
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, -1.0), (4.0, 0.5)]).is_err());
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..6)
            .map(|i| {
                let n = 32.0 * 2f64.powi(i);
                let noise = 1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0);
                (n, n.powf(-0.5) * noise)
            })
            .collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 0.05);
    }
}
