//! Kernel interpolation in the native space of a Matérn kernel.
//!
//! Finite combinations `sum_i a_i C(s_i, .)` are represented exactly by
//! [`NativeElement`]; their inner products are `a^T C(s, t) b`. The
//! interpolant `s_{f,x}` solves `Sigma u = y` through the Cholesky factor of
//! the (jittered) Gram matrix.

use nalgebra::DVector;

use crate::design::{distance, Design, PointSet};
use crate::error::{Error, Result};
use crate::kernel::{cross_column, gram, GramMatrix, MaternKernel};
use crate::par;

/// Default grid resolution per axis for fill distances in `d >= 2`.
pub const DEFAULT_FILL_RESOLUTION: usize = 256;

/// Power-function values below `-NEGATIVE_POWER_FACTOR * jitter` (plus a
/// rounding floor) are reported as errors instead of being clamped.
pub const NEGATIVE_POWER_FACTOR: f64 = 10.0;
const ROUNDING_FLOOR: f64 = 1e-12;

/// `s_{f,x}(.) = sum_i u_i C(x_i, .)` with `Sigma u = y`.
#[derive(Debug, Clone)]
pub struct Interpolant {
    kernel: MaternKernel,
    centers: Design,
    coefficients: DVector<f64>,
    values: DVector<f64>,
    gram: GramMatrix,
}

impl Interpolant {
    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &Design {
        &self.centers
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Value at a single point.
    pub fn eval_point(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.dim(),
                found: q.len(),
            });
        }
        let (column, _) = self.gram.cross_with_nugget(self.centers.points(), q, &self.kernel);
        Ok(column.iter().zip(self.coefficients.iter()).map(|(c, u)| c * u).sum())
    }

    /// Values at every query point, evaluated in parallel.
    pub fn eval(&self, query: &PointSet) -> Result<Vec<f64>> {
        self.kernel.check_set(query)?;
        let out = par::map_range(query.len(), |j| self.eval_point(query.point(j)));
        out.into_iter().collect()
    }

    /// `u^T Sigma u = u^T y`.
    pub fn native_norm_sq(&self) -> f64 {
        self.coefficients.dot(&self.values).max(0.0)
    }

    /// The interpolant as an element of `F_Phi` over its centers.
    pub fn element(&self) -> NativeElement {
        NativeElement {
            kernel: self.kernel,
            centers: self.centers.points().clone(),
            coefficients: self.coefficients.clone(),
        }
    }
}

/// Solves for the interpolant of `y` on `design`.
pub fn interpolate(design: &Design, y: &DVector<f64>, k: &MaternKernel, jitter: f64) -> Result<Interpolant> {
    if y.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contain non-finite values"));
    }
    let g = gram(design, k, jitter)?;
    let coefficients = g.solve(y);
    Ok(Interpolant {
        kernel: *k,
        centers: design.clone(),
        coefficients,
        values: y.clone(),
        gram: g,
    })
}

/// `sum_i u_i C(x_i, q)` for each query point.
pub fn eval_interpolant(s: &Interpolant, query: &PointSet) -> Result<Vec<f64>> {
    s.eval(query)
}

pub fn native_norm_sq(s: &Interpolant) -> f64 {
    s.native_norm_sq()
}

/// A finite kernel expansion `sum_i a_i C(s_i, .)`. Centers need not be distinct.
#[derive(Debug, Clone)]
pub struct NativeElement {
    kernel: MaternKernel,
    centers: PointSet,
    coefficients: DVector<f64>,
}

impl NativeElement {
    pub fn new(kernel: MaternKernel, centers: PointSet, coefficients: DVector<f64>) -> Result<Self> {
        kernel.check_set(&centers)?;
        if centers.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                found: coefficients.len(),
            });
        }
        Ok(NativeElement {
            kernel,
            centers,
            coefficients,
        })
    }

    pub fn zero(kernel: MaternKernel) -> Self {
        NativeElement {
            kernel,
            centers: PointSet::empty(kernel.dim()),
            coefficients: DVector::zeros(0),
        }
    }

    /// The single translate `C(x, .)`.
    pub fn translate(kernel: MaternKernel, x: &[f64]) -> Result<Self> {
        let mut centers = PointSet::empty(kernel.dim());
        centers.push(x)?;
        Self::new(kernel, centers, DVector::from_element(1, 1.0))
    }

    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn eval_point(&self, q: &[f64]) -> f64 {
        cross_column(&self.centers, q, &self.kernel)
            .iter()
            .zip(self.coefficients.iter())
            .map(|(c, a)| c * a)
            .sum()
    }

    pub fn eval(&self, query: &PointSet) -> Result<Vec<f64>> {
        self.kernel.check_set(query)?;
        Ok(par::map_range(query.len(), |j| self.eval_point(query.point(j))))
    }

    /// `self + scale * other` over the union of both center lists.
    pub fn axpy(&self, scale: f64, other: &NativeElement) -> Result<NativeElement> {
        if self.kernel != other.kernel {
            return Err(Error::KernelMismatch);
        }
        let centers = self.centers.concat(&other.centers)?;
        let mut coefficients = Vec::with_capacity(centers.len());
        coefficients.extend(self.coefficients.iter().copied());
        coefficients.extend(other.coefficients.iter().map(|b| scale * b));
        Ok(NativeElement {
            kernel: self.kernel,
            centers,
            coefficients: DVector::from_vec(coefficients),
        })
    }

    pub fn sub(&self, other: &NativeElement) -> Result<NativeElement> {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, scale: f64) -> NativeElement {
        NativeElement {
            kernel: self.kernel,
            centers: self.centers.clone(),
            coefficients: &self.coefficients * scale,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        // Kernel identity holds, so this cannot fail.
        inner_product(self, self).unwrap_or(f64::NAN)
    }
}

/// `sum_i sum_j a_i b_j C(s_i, t_j)`.
pub fn inner_product(a: &NativeElement, b: &NativeElement) -> Result<f64> {
    if a.kernel != b.kernel {
        return Err(Error::KernelMismatch);
    }
    let rows = par::map_range(a.centers.len(), |i| {
        let s = a.centers.point(i);
        let row: f64 = b
            .centers
            .iter()
            .zip(b.coefficients.iter())
            .map(|(t, bj)| bj * a.kernel.eval_unchecked(s, t))
            .sum();
        a.coefficients[i] * row
    });
    Ok(rows.iter().sum())
}

/// `sup_{x in Omega} min_j |x - x_j|`. Exact in one dimension; otherwise the
/// supremum is taken over a regular grid with `resolution` points per axis.
pub fn fill_distance(design: &Design, resolution: usize) -> Result<f64> {
    if design.is_empty() {
        return Err(Error::invalid("fill distance of an empty design"));
    }
    if design.dim() == 1 {
        let (lo, hi) = design.domain().bounds()[0];
        let mut xs: Vec<f64> = design.points().as_flat().to_vec();
        xs.sort_by(f64::total_cmp);
        let mut h = f64::max(xs[0] - lo, hi - xs[xs.len() - 1]);
        for w in xs.windows(2) {
            h = h.max(0.5 * (w[1] - w[0]));
        }
        return Ok(h);
    }
    if resolution < 2 {
        return Err(Error::invalid("fill-distance grid needs at least 2 points per axis"));
    }
    let grid = design.domain().grid(resolution);
    let nearest = par::map_range(grid.len(), |g| {
        let q = grid.point(g);
        design
            .points()
            .iter()
            .map(|p| distance(p, q))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(nearest.into_iter().fold(0.0, f64::max))
}

/// Clamps tiny negative power-function values produced by rounding.
pub(crate) fn clamp_power(value: f64, jitter: f64) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value.min(1.0 + jitter));
    }
    let tolerance = NEGATIVE_POWER_FACTOR * jitter + ROUNDING_FLOOR;
    if value < -tolerance {
        Err(Error::NegativeVariance { value, tolerance })
    } else {
        Ok(0.0)
    }
}

/// `C(x_new, x_new) - Sigma_1^T Sigma^{-1} Sigma_1` using an existing Gram factor.
pub fn power_with(g: &GramMatrix, centers: &PointSet, k: &MaternKernel, x_new: &[f64]) -> Result<f64> {
    if x_new.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: x_new.len(),
        });
    }
    clamp_power(g.raw_power(centers, x_new, k), g.jitter())
}

/// The power function of `design` at `x_new`, in `[0, 1]` up to the jitter.
pub fn power_function(design: &Design, k: &MaternKernel, x_new: &[f64], jitter: f64) -> Result<f64> {
    let g = gram(design, k, jitter)?;
    power_with(&g, design.points(), k, x_new)
}

/// Power function at many points with one factorization.
pub fn power_function_batch(design: &Design, k: &MaternKernel, query: &PointSet, jitter: f64) -> Result<Vec<f64>> {
    k.check_set(query)?;
    let g = gram(design, k, jitter)?;
    let out = par::map_range(query.len(), |j| power_with(&g, design.points(), k, query.point(j)));
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Domain;

    fn kernel(v: f64) -> MaternKernel {
        MaternKernel::new(v, 1.0, 1).unwrap()
    }

    fn line(xs: &[f64]) -> Design {
        Design::new(PointSet::from_scalars(xs).unwrap(), Domain::unit(1)).unwrap()
    }

    #[test]
    fn single_point_interpolant() {
        let k = kernel(0.5);
        let d = line(&[0.0]);
        let s = interpolate(&d, &DVector::from_vec(vec![3.0]), &k, 0.0).unwrap();
        assert_eq!(s.coefficients()[0], 3.0);
        assert_eq!(s.native_norm_sq(), 9.0);
        let v = s.eval(&PointSet::from_scalars(&[1.0]).unwrap()).unwrap()[0];
        assert!((v - 3.0 * (-(2f64).sqrt()).exp()).abs() < 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_interpolant() {
        let k = kernel(1.5);
        let d = line(&[0.1, 0.4, 0.9]);
        let s = interpolate(&d, &DVector::zeros(3), &k, 1e-8).unwrap();
        assert!(s.coefficients().iter().all(|&u| u == 0.0));
        assert_eq!(s.native_norm_sq(), 0.0);
        let q = PointSet::from_scalars(&[0.0, 0.33, 1.0]).unwrap();
        assert!(s.eval(&q).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reproduces_kernel_translate() {
        let k = kernel(1.5);
        let d = line(&[0.0, 0.2, 0.35, 0.6, 0.8, 1.0]);
        let f = NativeElement::translate(k, &[0.35]).unwrap();
        let y = DVector::from_vec(f.eval(d.points()).unwrap());
        let s = interpolate(&d, &y, &k, 0.0).unwrap();
        let q = Domain::unit(1).grid(101);
        let got = s.eval(&q).unwrap();
        let want = f.eval(&q).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolates_at_nodes_with_jitter() {
        let k = kernel(2.5);
        let d = line(&[0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0]);
        let s = interpolate(&d, &y, &k, 1e-8).unwrap();
        let at = s.eval(d.points()).unwrap();
        for (a, b) in at.iter().zip(y.iter()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn inner_product_examples() {
        let k = kernel(1.0);
        let a = NativeElement::translate(k, &[0.3]).unwrap();
        assert!((inner_product(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(inner_product(&a, &NativeElement::zero(k)).unwrap(), 0.0);
        let other = NativeElement::translate(kernel(2.0), &[0.3]).unwrap();
        assert!(matches!(inner_product(&a, &other), Err(Error::KernelMismatch)));
    }

    #[test]
    fn fill_distance_examples() {
        assert_eq!(fill_distance(&line(&[0.0, 0.5, 1.0]), 2).unwrap(), 0.25);
        assert_eq!(fill_distance(&line(&[0.5]), 2).unwrap(), 0.5);
        let centre = Design::from_rows(&[vec![0.5, 0.5]], Domain::unit(2)).unwrap();
        let h = fill_distance(&centre, 64).unwrap();
        assert!((h - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(fill_distance(&centre, 1).is_err());
    }

    #[test]
    fn fill_distance_2d_matches_dense_grid_oracle() {
        let d = Design::from_rows(&[vec![0.1, 0.2], vec![0.7, 0.9], vec![0.4, 0.5]], Domain::unit(2)).unwrap();
        let approx = fill_distance(&d, 256).unwrap();
        // brute force on a finer lattice
        let mut best: f64 = 0.0;
        for i in 0..=600 {
            for j in 0..=600 {
                let q = [i as f64 / 600.0, j as f64 / 600.0];
                let m = d.points().iter().map(|p| distance(p, &q)).fold(f64::INFINITY, f64::min);
                best = best.max(m);
            }
        }
        assert!((approx - best).abs() < 5e-3);
    }

    #[test]
    fn power_function_examples() {
        let k = kernel(1.5);
        let d = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(power_function(&d, &k, &[0.5], 1e-8).unwrap().abs() < 1e-8);
        let far = Design::from_rows(&[vec![0.0]], Domain::new(vec![(0.0, 1e4)]).unwrap()).unwrap();
        assert!((power_function(&far, &k, &[1e4], 1e-8).unwrap() - 1.0).abs() < 1e-12);
        let coarse = line(&[0.0, 0.5, 1.0]);
        let p_coarse = power_function(&coarse, &k, &[0.3], 1e-10).unwrap();
        let p_fine = power_function(&d, &k, &[0.3], 1e-10).unwrap();
        assert!(p_fine <= p_coarse);
    }

    #[test]
    fn clamping_rules() {
        assert_eq!(clamp_power(-1e-13, 0.0).unwrap(), 0.0);
        assert_eq!(clamp_power(-5e-8, 1e-8).unwrap(), 0.0);
        assert!(clamp_power(-1e-6, 1e-8).is_err());
    }
}
