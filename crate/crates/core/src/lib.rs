//! Estimate the effect of a binary treatment on the treated from
//! observational plate-appearance data.

pub mod dataset;
pub mod design;
pub mod error;
pub mod estimate;
pub mod ingest;
pub mod iv;
pub mod linalg;
pub mod matching;
pub mod pipeline;
pub mod propensity;
pub mod rng;
pub mod run_expectancy;
pub mod scm;
pub mod stats;
pub mod weighting;

pub use dataset::{AnalysisDataset, Hand, PlateAppearance};
pub use error::{Error, Result};
pub use estimate::{EttEstimate, Method, Subgroup};
