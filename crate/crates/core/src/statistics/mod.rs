//! Exact distribution oracles and uniformity validators.

mod histogram;
pub mod oracle;
pub mod special;
pub mod uniformity;

use thiserror::Error;

pub use histogram::Histogram;
pub use oracle::{
    compound_time_moments, max_uniform_deviation, negbin_ln_pmf, negbin_moments, negbin_pmf,
    runtime_sum_tail, tail_lower_bound, wrapped_residue_pmf, DiscreteSampler,
};
pub use uniformity::{
    chi_square_gof, chi_square_uniform, clt_residuals, min_entropy_mcv, shannon_entropy,
    shannon_entropy_pmf, UniformityReport, Verdict,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: u64, got: u64 },
    #[error("value {value} falls outside the {cells} residue cells")]
    ValueOutOfRange { value: u64, cells: usize },
    #[error("truncated sum did not reach tolerance within {terms} terms")]
    TruncationCap { terms: u64 },
    #[error("convolution support {max_ticks} exceeds the limit of {limit}")]
    SupportOverflow { max_ticks: u64, limit: u64 },
    #[error("malformed input: {0}")]
    Format(String),
}
