//! Posterior densities and sampling for the cheap-code model
//!
//! ```text
//! y^p = y^s(x, theta) + delta(x) + e,   delta ~ GP(0, tau^2 C_gamma),   e ~ N(0, sigma^2 I)
//! ```
//!
//! plus the joint Gaussian of physical and simulator outputs used when the
//! simulator is replaced by a surrogate.

mod density;
mod expensive;
mod io;
mod mcmc;
mod predictive;
mod prior;

pub use density::{
    gibbs_delta, log_posterior_cheap, log_posterior_noiseless, BayesData, GaussianConditional, LogDensity,
    ParamState,
};
pub use expensive::{assemble_joint_expensive, JointGaussian, MeanFunction, SurrogateHyper};
pub use io::{read_chain_csv, write_chain_csv, write_chain_meta, ChainMeta};
pub use mcmc::{
    run_chains, run_mcmc, Block, McmcConfig, PosteriorChain, PosteriorSample, ProposalScales, Transition,
};
pub use predictive::{posterior_predict_draw, posterior_predict_moments, predictive_summary, PredictiveSummary};
pub use prior::{Interval, PriorSpec, Sigma2Prior};
