//! Synthetic problems, designs and convergence-rate studies.

mod designs;
mod problems;
mod slope;
mod studies;

pub use designs::{make_design, DesignKind};
pub use problems::{ProblemSpec, SyntheticProblem, Zeta};
pub use slope::{fit_loglog_slope, SlopeFit};
pub use studies::{
    median, parabolic_vertex, run_rate_study_noiseless, NOISELESS_JITTER, run_rate_study_noisy, run_theta_limit_study, per_axis, trapezoid_weights, DroppedSize,
    MetricSeries, NoiselessConfig, NoisyConfig, RateReport, SizeRow, SlopeCheck, SlopeRule, TargetExponents,
    ThetaLimitConfig, ThetaLimitReport, ThetaLimitRow,
};
