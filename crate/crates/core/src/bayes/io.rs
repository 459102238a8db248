//! Chain storage: a columnar CSV with one row per retained sample and a JSON
//! sidecar with the seed, configuration and diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mcmc::{Block, McmcConfig, PosteriorChain, PosteriorSample, ProposalScales};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub config: McmcConfig,
    pub acceptance: Vec<(Block, Option<f64>)>,
    pub final_scales: ProposalScales,
    pub warnings: Vec<String>,
    pub samples: usize,
    pub theta_dim: usize,
    pub n: usize,
}

impl ChainMeta {
    pub fn from_chain(chain: &PosteriorChain) -> Self {
        ChainMeta {
            seed: chain.seed,
            config: chain.config.clone(),
            acceptance: chain.acceptance.clone(),
            final_scales: chain.final_scales.clone(),
            warnings: chain.warnings.clone(),
            samples: chain.samples.len(),
            theta_dim: chain.samples.first().map_or(0, |s| s.theta.len()),
            n: chain.samples.first().map_or(0, |s| s.delta.len()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("{}: {e}", path.display()))
}

pub fn write_chain_csv(chain: &PosteriorChain, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let p = chain.samples.first().map_or(0, |s| s.theta.len());
    let n = chain.samples.first().map_or(0, |s| s.delta.len());
    let mut header: Vec<String> = (0..p).map(|k| format!("theta{k}")).collect();
    header.extend(["tau2", "sigma2", "gamma", "log_density"].map(String::from));
    header.extend((0..n).map(|i| format!("delta{i}")));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for s in &chain.samples {
        let mut row: Vec<String> = s.theta.iter().map(|v| format!("{v:.17e}")).collect();
        for v in [s.tau2, s.sigma2, s.gamma, s.log_density] {
            row.push(format!("{v:.17e}"));
        }
        row.extend(s.delta.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_chain_meta(chain: &PosteriorChain, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&ChainMeta::from_chain(chain)).map_err(|e| io_err(path, e))?;
    std::fs::write(path, json).map_err(|e| io_err(path, e))
}

/// Reads samples written by [`write_chain_csv`].
pub fn read_chain_csv(path: &Path) -> Result<Vec<PosteriorSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.clone();
    let p = header.iter().take_while(|h| h.starts_with("theta")).count();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| io_err(path, e))?;
        if v.len() < p + 4 {
            return Err(io_err(path, "row too short"));
        }
        out.push(PosteriorSample {
            theta: v[..p].to_vec(),
            tau2: v[p],
            sigma2: v[p + 1],
            gamma: v[p + 2],
            log_density: v[p + 3],
            delta: v[p + 4..].to_vec(),
        });
    }
    Ok(out)
}
