use serde::{Deserialize, Serialize};

use super::{balance, ett_gcomp, match_dataset, BalanceReport, MatchSpec, MatchedSet};
use crate::dataset::AnalysisDataset;
use crate::design::{build_design, DesignSpec};
use crate::error::{Error, Result};
use crate::estimate::{EttEstimate, Subgroup};
use crate::propensity::{LogisticOptions, LogisticProblem, PropensityModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    pub spec: MatchSpec,
    pub logistic: LogisticOptions,
    /// |SMD| above this is reported as imbalanced.
    pub balance_threshold: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { spec: MatchSpec::default(), logistic: LogisticOptions::default(), balance_threshold: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct MatchFit {
    pub estimate: EttEstimate,
    pub model: PropensityModel,
    /// Linear scores of the subgroup rows, in dataset order.
    pub scores: Vec<f64>,
    pub matched: MatchedSet,
    pub balance: BalanceReport,
}

/// Propensity score matching followed by g-computation, for one subgroup.
pub fn ett_match(ds: &AnalysisDataset, subgroup: Subgroup, opts: &MatchOptions) -> Result<MatchFit> {
    let sub = subgroup.select(ds);
    if sub.is_empty() {
        return Err(Error::EmptyInput(format!("subgroup {subgroup} has no rows")));
    }
    let design = build_design(&sub, &DesignSpec::confounders(subgroup.is_pooled()));
    let treated = sub.treatments();
    let problem = LogisticProblem::new(&design, &treated)?;
    let fit = problem.fit(None, None, &opts.logistic)?;
    let scores = problem.linear_predictors(&fit.beta);
    let matched = match_dataset(&sub, &scores, &opts.spec)?;
    let estimate = ett_gcomp(&matched, &sub.outcomes(), &treated, &design, subgroup)?
        .with_diagnostic("propensity_iterations", fit.report.iterations);
    let report = balance(&design.matrix, &treated, &matched.weights, opts.balance_threshold);
    Ok(MatchFit { estimate, model: problem.to_model(&fit), scores, matched, balance: report })
}
