use std::collections::HashMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::density::BayesData;
use super::mcmc::{PosteriorChain, PosteriorSample};
use crate::design::PointSet;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::native::clamp_power;
use crate::par;

fn moments_with(sample: &PosteriorSample, data: &BayesData, g: &GramMatrix, x_new: &[f64]) -> Result<(f64, f64)> {
    let k = data.kernel(sample.gamma)?;
    if x_new.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: x_new.len(),
        });
    }
    let ys = data.model.eval(x_new, &sample.theta)?;
    let centers = data.design.points();
    let (column, prior) = g.cross_with_nugget(centers, x_new, &k);
    let coeffs = g.solve(&DVector::from_column_slice(&sample.delta));
    let mean = ys + column.iter().zip(coeffs.iter()).map(|(c, a)| c * a).sum::<f64>();
    let power = clamp_power(prior - g.inv_quad_form(&column), g.jitter())?;
    Ok((mean, sample.tau2 * power + sample.sigma2))
}

/// Mean `y^s(x_new, theta) + Sigma_1^T Sigma^{-1} delta(x)` and variance
/// `tau^2 (1 - Sigma_1^T Sigma^{-1} Sigma_1) + sigma^2` at one sample.
pub fn posterior_predict_moments(sample: &PosteriorSample, data: &BayesData, x_new: &[f64]) -> Result<(f64, f64)> {
    if sample.delta.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: sample.delta.len(),
        });
    }
    let g = data.gram(sample.gamma)?;
    moments_with(sample, data, &g, x_new)
}

/// One draw of `y^p(x_new)` given a posterior sample.
pub fn posterior_predict_draw<R: Rng + ?Sized>(
    sample: &PosteriorSample,
    data: &BayesData,
    x_new: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let (mean, var) = posterior_predict_moments(sample, data, x_new)?;
    if var == 0.0 {
        return Ok(mean);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + var.sqrt() * z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub lo90: f64,
    pub hi90: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Posterior predictive mean and central 90% interval at each query point,
/// from one draw per retained sample. Draws use per-sample streams derived
/// from `seed`, so the result does not depend on the thread count.
pub fn predictive_summary(
    chain: &PosteriorChain,
    data: &BayesData,
    x_new: &PointSet,
    seed: u64,
) -> Result<Vec<PredictiveSummary>> {
    if chain.samples.is_empty() {
        return Err(Error::invalid("chain has no samples"));
    }
    let mut grams: HashMap<u64, GramMatrix> = HashMap::new();
    for s in &chain.samples {
        if let std::collections::hash_map::Entry::Vacant(e) = grams.entry(s.gamma.to_bits()) {
            e.insert(data.gram(s.gamma)?);
        }
    }
    let draws = par::map_range(chain.samples.len(), |i| -> Result<Vec<f64>> {
        let s = &chain.samples[i];
        let g = &grams[&s.gamma.to_bits()];
        let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, &[i as u64]));
        x_new
            .iter()
            .map(|q| {
                let (m, v) = moments_with(s, data, g, q)?;
                let z: f64 = StandardNormal.sample(&mut rng);
                Ok(m + v.sqrt() * z)
            })
            .collect()
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    Ok((0..x_new.len())
        .map(|j| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(f64::total_cmp);
            PredictiveSummary {
                mean,
                lo90: quantile(&col, 0.05),
                hi90: quantile(&col, 0.95),
            }
        })
        .collect())
}
