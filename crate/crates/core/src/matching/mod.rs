//! k:1 nearest-neighbour matching on the linear propensity score, balance
//! diagnostics, and g-computation of the ETT on the matched set.

mod balance;
mod fit;
mod gcomp;
mod greedy;

pub use balance::{balance, ecdf_distance, BalanceReport, CovariateBalance};
pub use fit::{ett_match, MatchFit, MatchOptions};
pub use gcomp::{ett_gcomp, TREATMENT_COLUMN};
pub use greedy::{match_dataset, nn_match, ExactKey, GreedyOrder, MatchPair, MatchSpec, MatchedSet};
