//! Boxes, point sets and validated designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `prod_k [lo_k, hi_k]`. Used both for the input
/// domain and for the calibration-parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("domain must have at least one dimension"));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(format!(
                    "dimension {k}: bounds [{lo}, {hi}] do not form a nonempty interval"
                )));
            }
        }
        Ok(Domain { bounds })
    }

    /// `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Domain {
            bounds: vec![(0.0, 1.0); dim.max(1)],
        }
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        Self::new(lower.iter().copied().zip(upper.iter().copied()).collect())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.1).collect()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.bounds[k].1 - self.bounds[k].0
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// Regular endpoint-inclusive grid with `per_dim` points per axis
    /// (one point at the center when `per_dim == 1`), first axis slowest.
    pub fn grid(&self, per_dim: usize) -> PointSet {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, per_dim))
            .collect();
        let total = per_dim.pow(d as u32);
        let mut coords = Vec::with_capacity(total * d);
        for idx in 0..total {
            let mut rem = idx;
            let mut point = vec![0.0; d];
            for k in (0..d).rev() {
                point[k] = axes[k][rem % per_dim];
                rem /= per_dim;
            }
            coords.extend_from_slice(&point);
        }
        PointSet { coords, dim: d }
    }
}

/// `count` evenly spaced values on `[lo, hi]` including both ends; the
/// midpoint when `count == 1`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// An ordered list of points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn empty(dim: usize) -> Self {
        PointSet {
            coords: Vec::new(),
            dim,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut set = PointSet::empty(dim);
        for row in rows {
            set.push(row)?;
        }
        Ok(set)
    }

    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates cannot be split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in point {}",
                bad / dim
            )));
        }
        Ok(PointSet { coords, dim })
    }

    /// Points on a line: `values` become 1-d points.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(|p| p.to_vec()).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet {
            coords,
            dim: self.dim,
        })
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            coords,
            dim: self.dim,
        }
    }
}

/// Euclidean distance.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A nonempty set of pairwise distinct points inside a box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: PointSet,
    domain: Domain,
}

impl Design {
    pub fn new(points: PointSet, domain: Domain) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("design must contain at least one point"));
        }
        if points.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: points.dim(),
            });
        }
        if let Some(i) = (0..points.len()).find(|&i| !domain.contains(points.point(i))) {
            return Err(Error::invalid(format!(
                "design point {i} {:?} lies outside the domain",
                points.point(i)
            )));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if distance(points.point(i), points.point(j)) == 0.0 {
                    return Err(Error::DuplicatePoint { first: j, second: i });
                }
            }
        }
        Ok(Design { points, domain })
    }

    pub fn from_rows(rows: &[Vec<f64>], domain: Domain) -> Result<Self> {
        let points = PointSet::from_rows(rows, domain.dim())?;
        Self::new(points, domain)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    /// Reordered copy; distinctness and containment are preserved.
    pub fn permuted(&self, order: &[usize]) -> Design {
        Design {
            points: self.points.select(order),
            domain: self.domain.clone(),
        }
    }

    /// Subset of the design (indices must be distinct).
    pub fn subset(&self, indices: &[usize]) -> Result<Design> {
        Design::new(self.points.select(indices), self.domain.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_outside_points() {
        let dom = Domain::unit(1);
        assert!(matches!(
            Design::from_rows(&[vec![0.2], vec![0.2]], dom.clone()),
            Err(Error::DuplicatePoint { first: 0, second: 1 })
        ));
        assert!(Design::from_rows(&[vec![1.5]], dom.clone()).is_err());
        assert!(Design::from_rows(&[], dom).is_err());
    }

    #[test]
    fn grid_is_endpoint_inclusive() {
        let g = Domain::unit(1).grid(3);
        assert_eq!(g.to_rows(), vec![vec![0.0], vec![0.5], vec![1.0]]);
        let g2 = Domain::unit(2).grid(2);
        assert_eq!(
            g2.to_rows(),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(vec![(1.0, 0.0)]).is_err());
        assert!(Domain::new(vec![]).is_err());
        assert!(Domain::new(vec![(0.5, 0.5)]).is_ok());
    }
}
