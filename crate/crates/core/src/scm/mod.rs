//! Structural causal model with known effect of treatment on the treated.
//!
//! Confounders C act on both treatment and outcome, a team-level shift
//! propensity Z acts on treatment only, and an optional latent U acts on
//! both. Both potential outcomes are kept for every unit.

mod config;
mod generate;
mod innings;

pub use config::{
    calibrated_noise_sd, default_confounders, table2_cells, table2_total, CellSpec, ConfounderSpec, EffectSpec, InstrumentSpec,
    OutcomeSpec, ScmConfig, TreatmentSpec, DEFAULT_OUTCOME_COEFS, OUTCOME_SD, TABLE2, UNMEASURED_U_STRENGTH,
};
pub use generate::{
    confounding_bias, generate, marginals, true_ett, ConfoundingBias, GroupRate, MarginalsReport, Population, Simulation, TrueEtt,
    VariableMarginal,
};
pub use innings::{simulate_inning, simulate_innings, simulated_re_matrix, InningModel};
