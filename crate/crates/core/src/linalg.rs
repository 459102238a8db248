//! Dense Cholesky factorization with pivot diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `A = L L^T`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix. Only the lower triangle is read.
    ///
    /// `jitter` is only reported in the error; it is not added here.
    pub fn factor(a: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = (&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let s = a[(i, j)] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Conditioning {
                            index: i,
                            pivot: s,
                            jitter,
                        });
                    }
                    lower[i * n + i] = s.sqrt();
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.lower[i * self.n..i * self.n + i + 1]
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let dot: f64 = row[..i].iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - dot) / row[i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n);
        for i in (0..self.n).rev() {
            let row = self.row(i);
            let xi = y[i] / row[i];
            y[i] = xi;
            for (yk, lik) in y[..i].iter_mut().zip(&row[..i]) {
                *yk -= lik * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    /// `b^T A^{-1} b`, computed as `|L^{-1} b|^2`.
    pub fn inv_quad_form(&self, b: &[f64]) -> f64 {
        let mut w = b.to_vec();
        self.forward_in_place(&mut w);
        w.iter().map(|v| v * v).sum()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.lower[i * self.n + i].ln()).sum::<f64>()
    }

    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.lower[i * self.n + i])
            .fold(f64::INFINITY, f64::min)
    }

    /// `L z`, used to turn standard normals into correlated draws.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(z).map(|(l, v)| l * v).sum())
            .collect()
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if j <= i {
                self.lower[i * self.n + j]
            } else {
                0.0
            }
        })
    }
}

/// Factors `a`, adding the smallest diagonal shift from a doubling ladder
/// starting at `base` when the unshifted matrix is not numerically positive definite.
pub fn factor_with_fallback(a: &DMatrix<f64>, base: f64) -> Result<(Cholesky, f64)> {
    match Cholesky::factor(a, 0.0) {
        Ok(c) => return Ok((c, 0.0)),
        Err(Error::Conditioning { .. }) => {}
        Err(e) => return Err(e),
    }
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut shift = base * scale;
    let mut last = None;
    for _ in 0..40 {
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += shift;
        }
        match Cholesky::factor(&shifted, shift) {
            Ok(c) => return Ok((c, shift)),
            Err(e) => last = Some(e),
        }
        shift *= 10.0;
    }
    Err(last.unwrap_or_else(|| Error::invalid("empty matrix")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn solve_matches_nalgebra() {
        let a = spd(6);
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let ours = Cholesky::factor(&a, 0.0).unwrap().solve(&b);
        let theirs = a.clone().cholesky().unwrap().solve(&b);
        assert!((ours - theirs).norm() < 1e-12);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let a = spd(5);
        let chol = Cholesky::factor(&a, 0.0).unwrap();
        let eig: f64 = a.symmetric_eigenvalues().iter().map(|v| v.ln()).sum();
        assert!((chol.log_det() - eig).abs() < 1e-10 * eig.abs().max(1.0));
    }

    #[test]
    fn reports_failing_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match Cholesky::factor(&a, 0.0) {
            Err(Error::Conditioning { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn fallback_adds_shift_only_when_needed() {
        let a = spd(4);
        assert_eq!(factor_with_fallback(&a, 1e-12).unwrap().1, 0.0);
        let singular = DMatrix::from_element(3, 3, 1.0);
        let (_, shift) = factor_with_fallback(&singular, 1e-12).unwrap();
        assert!(shift > 0.0);
    }
}
