//! Matérn correlation functions, Gram and cross-covariance assembly, and the
//! Matérn spectral density with its norm-equivalence constants.
//!
//! The correlation is
//!
//! ```text
//! C(s, t) = (2 sqrt(v) g r)^v K_v(2 sqrt(v) g r) / (Gamma(v) 2^(v-1)),   r = |s - t|
//! ```
//!
//! with smoothness `v` and scale `g`. Half-integer smoothness uses the
//! closed form `exp(-z) * poly(z)`; other orders go through [`crate::special`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{distance, Design, PointSet};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::par;
use crate::special::{bessel_k_scaled, ln_gamma};

/// Below this value of `2 sqrt(v) g r` the correlation is returned as exactly 1.
pub const SMALL_ARGUMENT: f64 = 1e-10;

/// Default diagonal jitter for Gram matrices.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Largest half-integer order `p + 1/2` evaluated by the closed form.
const MAX_CLOSED_FORM: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct MaternSpec {
    upsilon: f64,
    gamma: f64,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Evaluator {
    /// Smoothness `p + 1/2`.
    HalfInteger(u32),
    /// `ln(Gamma(v) 2^(v-1))`.
    Bessel { log_norm: f64 },
}

/// Isotropic Matérn correlation with smoothness `upsilon` and scale `gamma` on `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaternSpec", into = "MaternSpec")]
pub struct MaternKernel {
    upsilon: f64,
    gamma: f64,
    dim: usize,
    evaluator: Evaluator,
}

impl TryFrom<MaternSpec> for MaternKernel {
    type Error = Error;
    fn try_from(s: MaternSpec) -> Result<Self> {
        MaternKernel::new(s.upsilon, s.gamma, s.dim)
    }
}

impl From<MaternKernel> for MaternSpec {
    fn from(k: MaternKernel) -> Self {
        MaternSpec {
            upsilon: k.upsilon,
            gamma: k.gamma,
            dim: k.dim,
        }
    }
}

impl MaternKernel {
    pub fn new(upsilon: f64, gamma: f64, dim: usize) -> Result<Self> {
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::invalid(format!("smoothness must be positive, got {upsilon}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("scale must be positive, got {gamma}")));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        let twice = 2.0 * upsilon;
        let evaluator = if twice.fract() == 0.0 && (twice as u64) % 2 == 1 && upsilon < MAX_CLOSED_FORM as f64 + 1.0 {
            Evaluator::HalfInteger((upsilon - 0.5) as u32)
        } else {
            Evaluator::Bessel {
                log_norm: ln_gamma(upsilon) + (upsilon - 1.0) * std::f64::consts::LN_2,
            }
        };
        Ok(MaternKernel {
            upsilon,
            gamma,
            dim,
            evaluator,
        })
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same smoothness and dimension, different scale.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        MaternKernel::new(self.upsilon, gamma, self.dim)
    }

    /// Rate and bound statements need `upsilon >= 1`.
    pub fn require_theory(&self) -> Result<()> {
        if self.upsilon < 1.0 {
            Err(Error::SmoothnessTooLow {
                upsilon: self.upsilon,
            })
        } else {
            Ok(())
        }
    }

    /// Correlation as a function of distance `r >= 0`.
    #[inline]
    pub fn correlation(&self, r: f64) -> f64 {
        let z = 2.0 * self.upsilon.sqrt() * self.gamma * r;
        if z < SMALL_ARGUMENT {
            return 1.0;
        }
        match self.evaluator {
            Evaluator::HalfInteger(p) => half_integer(p, z),
            Evaluator::Bessel { log_norm } => {
                let log_value = self.upsilon * z.ln() + bessel_k_scaled(self.upsilon, z).ln() - z - log_norm;
                log_value.exp().min(1.0)
            }
        }
    }

    /// `C(s, t)`. Dimensions are checked by the caller.
    #[inline]
    pub(crate) fn eval_unchecked(&self, s: &[f64], t: &[f64]) -> f64 {
        self.correlation(distance(s, t))
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(())
    }

    pub(crate) fn check_set(&self, p: &PointSet) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.dim(),
            });
        }
        Ok(())
    }
}

/// `exp(-z) p!/(2p)! sum_k (p+k)!/(k!(p-k)!) (2z)^(p-k)`.
fn half_integer(p: u32, z: f64) -> f64 {
    match p {
        0 => (-z).exp(),
        1 => (1.0 + z) * (-z).exp(),
        2 => (1.0 + z + z * z / 3.0) * (-z).exp(),
        _ => {
            let p = p as usize;
            // term_k = (p+k)!/(k!(p-k)!) * (2z)^(p-k) * p!/(2p)!, built from k = p downwards.
            let mut total = 0.0;
            let mut term = 1.0; // k = p: (2p)!/p! * p!/(2p)! = 1
            total += term;
            for k in (0..p).rev() {
                // ratio term_k / term_{k+1} = (k+1)(2z) / ((p+k+1)(p-k))
                term *= (k + 1) as f64 * 2.0 * z / (((p + k + 1) * (p - k)) as f64);
                total += term;
            }
            total * (-z).exp()
        }
    }
}

/// `C_{v,g}(s, t)`.
pub fn matern(s: &[f64], t: &[f64], k: &MaternKernel) -> Result<f64> {
    k.check_point(s)?;
    k.check_point(t)?;
    Ok(k.eval_unchecked(s, t))
}

/// A Gram matrix `Sigma + jitter I` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    jitter: f64,
    factor: Cholesky,
}

impl GramMatrix {
    /// Entries including the jitter on the diagonal.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    /// `v^T Sigma^{-1} v`.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        self.factor.inv_quad_form(v)
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    /// Cross-covariance column of `q` against the `centers` that produced this
    /// matrix, and the prior variance at `q`. A query that coincides with a
    /// center is that center: it picks up the diagonal jitter in both places,
    /// so interpolants reproduce their data and the power function vanishes there.
    pub fn cross_with_nugget(&self, centers: &PointSet, q: &[f64], k: &MaternKernel) -> (Vec<f64>, f64) {
        let mut prior = 1.0;
        let column = centers
            .iter()
            .map(|c| {
                let r = distance(c, q);
                if r == 0.0 {
                    prior = 1.0 + self.jitter;
                    1.0 + self.jitter
                } else {
                    k.correlation(r)
                }
            })
            .collect();
        (column, prior)
    }

    /// `C(q, q) - Sigma_1^T Sigma^{-1} Sigma_1`, unclamped.
    pub fn raw_power(&self, centers: &PointSet, q: &[f64], k: &MaternKernel) -> f64 {
        let (column, prior) = self.cross_with_nugget(centers, q, k);
        prior - self.factor.inv_quad_form(&column)
    }
}

/// Assembles `(C(x_i, x_j))_{ij} + jitter I` and factors it. Rows are filled in parallel.
pub fn gram(design: &Design, k: &MaternKernel, jitter: f64) -> Result<GramMatrix> {
    gram_points(design.points(), k, jitter)
}

pub(crate) fn gram_points(points: &PointSet, k: &MaternKernel, jitter: f64) -> Result<GramMatrix> {
    k.check_set(points)?;
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(Error::invalid(format!("jitter must be nonnegative, got {jitter}")));
    }
    let entries = raw_gram(points, k, jitter);
    let factor = Cholesky::factor(&entries, jitter)?;
    Ok(GramMatrix {
        entries,
        jitter,
        factor,
    })
}

/// Symmetric correlation matrix with `jitter` on the diagonal, unfactored.
pub(crate) fn raw_gram(points: &PointSet, k: &MaternKernel, jitter: f64) -> DMatrix<f64> {
    let n = points.len();
    let rows = par::map_range(n, |i| {
        let pi = points.point(i);
        (0..i).map(|j| k.eval_unchecked(pi, points.point(j))).collect::<Vec<_>>()
    });
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m[(i, i)] += jitter;
    }
    m
}

/// `n x m` matrix with entries `C(x_i, q_j)`. Columns are filled in parallel.
pub fn cross_cov(centers: &PointSet, query: &PointSet, k: &MaternKernel) -> Result<DMatrix<f64>> {
    k.check_set(centers)?;
    k.check_set(query)?;
    let n = centers.len();
    let cols = par::map_range(query.len(), |j| cross_column(centers, query.point(j), k));
    let mut out = DMatrix::zeros(n, query.len());
    for (j, col) in cols.into_iter().enumerate() {
        out.column_mut(j).copy_from_slice(&col);
    }
    Ok(out)
}

/// `(C(x_1, q), ..., C(x_n, q))`.
pub(crate) fn cross_column(centers: &PointSet, q: &[f64], k: &MaternKernel) -> Vec<f64> {
    centers.iter().map(|c| k.eval_unchecked(c, q)).collect()
}

/// Fourier transform of the Matérn correlation,
/// `2^(d/2) (4 v g^2)^v Gamma(v + d/2) / Gamma(v) (4 v g^2 + |w|^2)^-(v + d/2)`.
pub fn spectral_density(omega: &[f64], k: &MaternKernel) -> Result<f64> {
    k.check_point(omega)?;
    let d = k.dim as f64;
    let (v, g) = (k.upsilon, k.gamma);
    let a = 4.0 * v * g * g;
    let w2: f64 = omega.iter().map(|w| w * w).sum();
    let s = v + d / 2.0;
    let log_value = 0.5 * d * std::f64::consts::LN_2 + v * a.ln() + ln_gamma(s) - ln_gamma(v) - s * (a + w2).ln();
    Ok(log_value.exp())
}

/// Constants `(C1, C2)` with
/// `C2 (1+|w|^2)^-(v+d/2) <= spectral_density(w) <= C1 (1+|w|^2)^-(v+d/2)`
/// for every `w` and every scale in `[gamma_lo, gamma_hi]`.
pub fn spectral_bounds(upsilon: f64, gamma_lo: f64, gamma_hi: f64, d: usize) -> Result<(f64, f64)> {
    if !(upsilon >= 1.0) {
        return Err(Error::SmoothnessTooLow { upsilon });
    }
    if !(gamma_lo > 0.0) || !(gamma_lo <= gamma_hi) || !gamma_hi.is_finite() {
        return Err(Error::invalid(format!(
            "scale interval [{gamma_lo}, {gamma_hi}] must satisfy 0 < lo <= hi"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let df = d as f64;
    let log_lead = 0.5 * df * std::f64::consts::LN_2 + ln_gamma(upsilon + df / 2.0) - ln_gamma(upsilon);
    let a_lo = (4.0 * upsilon * gamma_lo * gamma_lo).ln();
    let a_hi = (4.0 * upsilon * gamma_hi * gamma_hi).ln();
    let c1 = log_lead + f64::max(upsilon * a_hi, -0.5 * df * a_lo);
    let c2 = log_lead + f64::min(upsilon * a_lo, -0.5 * df * a_hi);
    Ok((c1.exp(), c2.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Domain;

    #[test]
    fn matern_at_zero_is_one() {
        for &v in &[0.5, 1.0, 1.3, 2.5, 3.0] {
            let k = MaternKernel::new(v, 2.0, 2).unwrap();
            assert_eq!(matern(&[0.3, 0.1], &[0.3, 0.1], &k).unwrap(), 1.0);
        }
    }

    #[test]
    fn matern_half_and_three_halves() {
        let k = MaternKernel::new(0.5, 1.0, 1).unwrap();
        let v = matern(&[0.0], &[1.0], &k).unwrap();
        assert!((v - (-(2f64).sqrt()).exp()).abs() < 1e-15);
        assert!((v - 0.243117).abs() < 1e-6);

        let k = MaternKernel::new(1.5, 1.0, 1).unwrap();
        let s6 = 6f64.sqrt();
        let v = matern(&[0.0], &[1.0], &k).unwrap();
        assert!((v - (1.0 + s6) * (-s6).exp()).abs() < 1e-15);
        assert!((v - 0.297821).abs() < 1e-6);
    }

    #[test]
    fn closed_forms_agree_with_bessel_route() {
        for p in 0..6u32 {
            let v = p as f64 + 0.5;
            let log_norm = ln_gamma(v) + (v - 1.0) * std::f64::consts::LN_2;
            for &z in &[1e-3, 0.4, 1.0, 2.5, 9.0, 30.0] {
                let closed = half_integer(p, z);
                let bessel = (v * z.ln() + bessel_k_scaled(v, z).ln() - z - log_norm).exp();
                assert!((closed / bessel - 1.0).abs() < 1e-12, "p = {p}, z = {z}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MaternKernel::new(0.0, 1.0, 1).is_err());
        assert!(MaternKernel::new(1.0, -1.0, 1).is_err());
        let k = MaternKernel::new(1.0, 1.0, 1).unwrap();
        assert!(matern(&[f64::NAN], &[0.0], &k).is_err());
        assert!(matern(&[0.0, 1.0], &[0.0], &k).is_err());
        assert!(matches!(
            MaternKernel::new(0.5, 1.0, 1).unwrap().require_theory(),
            Err(Error::SmoothnessTooLow { .. })
        ));
    }

    #[test]
    fn gram_examples() {
        let k = MaternKernel::new(0.5, 1.0, 1).unwrap();
        let one = Design::from_rows(&[vec![0.4]], Domain::unit(1)).unwrap();
        let g = gram(&one, &k, 0.0).unwrap();
        assert_eq!(g.entries()[(0, 0)], 1.0);

        let two = Design::from_rows(&[vec![0.0], vec![1.0]], Domain::unit(1)).unwrap();
        let g = gram(&two, &k, 0.0).unwrap();
        assert!((g.entries()[(0, 1)] - (-(2f64).sqrt()).exp()).abs() < 1e-15);
        assert_eq!(g.entries()[(0, 1)], g.entries()[(1, 0)]);
    }

    #[test]
    fn near_duplicate_points_fail_to_factor_without_jitter() {
        let k = MaternKernel::new(2.5, 1.0, 1).unwrap();
        let pts = PointSet::from_scalars(&[0.5, 0.5 + 1e-12]).unwrap();
        let d = Design::new(pts, Domain::unit(1)).unwrap();
        assert!(matches!(gram(&d, &k, 0.0), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn cross_cov_examples() {
        let k = MaternKernel::new(0.5, 1.0, 1).unwrap();
        let c = PointSet::from_scalars(&[0.0]).unwrap();
        let q = PointSet::from_scalars(&[1.0, 1e6]).unwrap();
        let m = cross_cov(&c, &q, &k).unwrap();
        assert!((m[(0, 0)] - (-(2f64).sqrt()).exp()).abs() < 1e-15);
        assert!(m[(0, 1)] < 1e-300);
        assert!(cross_cov(&c, &PointSet::empty(2), &k).is_err());
    }

    #[test]
    fn spectral_density_at_origin() {
        let k = MaternKernel::new(1.0, 1.0, 1).unwrap();
        let v = spectral_density(&[0.0], &k).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt() / 4.0).abs() < 1e-14);
        assert!((v - 0.626657).abs() < 1e-6);
    }

    #[test]
    fn spectral_bounds_example() {
        let (c1, c2) = spectral_bounds(1.0, 1.0, 1.0, 1).unwrap();
        assert!((c1 - 2.0 * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
        assert!((c1 - 5.01326).abs() < 1e-5);
        assert!(c1 >= c2);
        assert!(spectral_bounds(1.0, 2.0, 1.0, 1).is_err());
        assert!(spectral_bounds(0.5, 1.0, 2.0, 1).is_err());
    }
}
