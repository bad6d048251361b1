//! Odds-weighted (IPTW) ETT estimation, the shared bootstrap engine and the
//! high-propensity trimming sensitivity check.

mod bootstrap;
mod iptw;

pub use bootstrap::{bootstrap, BootstrapPlan, BootstrapResult, ResampleUnit, Resampler};
pub use iptw::{
    ett_iptw, iptw_point, odds_weights, trim_against, trim_mask, trim_sensitivity, write_trim_table, IptwFit, IptwMode, IptwOptions,
    TrimComparison, DEFAULT_EPS,
};
