use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Design, Domain, PointSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    UniformRandom,
    RegularGrid,
}

/// `n` points in `domain`. Uniform designs are deterministic in `seed`; grid
/// designs use `ceil(n^(1/d))` points per axis (endpoints included), keeping
/// the first `n` in lexicographic order.
pub fn make_design(kind: DesignKind, n: usize, domain: &Domain, seed: u64) -> Result<Design> {
    if n == 0 {
        return Err(Error::invalid("a design needs at least one point"));
    }
    let d = domain.dim();
    match kind {
        DesignKind::RegularGrid => {
            let mut m = (n as f64).powf(1.0 / d as f64).round() as usize;
            while m.pow(d as u32) < n {
                m += 1;
            }
            while m > 1 && (m - 1).pow(d as u32) >= n {
                m -= 1;
            }
            let grid = domain.grid(m);
            let idx: Vec<usize> = (0..n).collect();
            Design::new(grid.select(&idx), domain.clone())
        }
        DesignKind::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut points = PointSet::empty(d);
            let mut seen = std::collections::HashSet::new();
            while points.len() < n {
                let p: Vec<f64> = domain
                    .bounds()
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect();
                let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
                if seen.insert(key) {
                    points.push(&p)?;
                } else if domain.bounds().iter().all(|(lo, hi)| lo == hi) {
                    return Err(Error::invalid("a degenerate domain holds only one distinct point"));
                }
            }
            Design::new(points, domain.clone())
        }
    }
}
