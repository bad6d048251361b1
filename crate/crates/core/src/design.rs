//! Turning an analysis dataset into numeric design matrices.

use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisDataset, Hand};
use crate::linalg::RowMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSelection {
    All,
    /// Covariates whose name starts with the prefix, e.g. `pitcher_`.
    Prefix(String),
    Named(Vec<String>),
    None,
}

/// Which dataset columns become regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub covariates: CovariateSelection,
    pub p_throws: bool,
    /// Batter handedness indicator; only meaningful for pooled analyses.
    pub stand: bool,
    /// One indicator per game year after the first.
    pub year_indicators: bool,
}

impl DesignSpec {
    /// Main-effects confounder set: every covariate, pitcher hand, year.
    pub fn confounders(pooled: bool) -> Self {
        Self {
            covariates: CovariateSelection::All,
            p_throws: true,
            stand: pooled,
            year_indicators: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: RowMatrix,
    pub kinds: Vec<ColumnKind>,
}

impl Design {
    pub fn names(&self) -> &[String] {
        &self.matrix.names
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design { matrix: self.matrix.select_rows(rows), kinds: self.kinds.clone() }
    }

    /// Columns that are not year indicators (used for balance reporting).
    pub fn non_year_columns(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&j| !self.names()[j].starts_with("year_")).collect()
    }
}

pub fn selected_covariates(ds: &AnalysisDataset, sel: &CovariateSelection) -> Vec<usize> {
    match sel {
        CovariateSelection::All => (0..ds.covariate_names.len()).collect(),
        CovariateSelection::Prefix(p) => (0..ds.covariate_names.len())
            .filter(|&j| ds.covariate_names[j].starts_with(p.as_str()))
            .collect(),
        CovariateSelection::Named(names) => names.iter().filter_map(|n| ds.covariate_index(n)).collect(),
        CovariateSelection::None => Vec::new(),
    }
}

pub fn build_design(ds: &AnalysisDataset, spec: &DesignSpec) -> Design {
    let covs = selected_covariates(ds, &spec.covariates);
    let years = if spec.year_indicators { ds.years() } else { Vec::new() };
    let mut names: Vec<String> = covs.iter().map(|&j| ds.covariate_names[j].clone()).collect();
    let mut kinds = vec![ColumnKind::Continuous; covs.len()];
    if spec.p_throws {
        names.push("p_throws_R".into());
        kinds.push(ColumnKind::Indicator);
    }
    if spec.stand {
        names.push("stand_R".into());
        kinds.push(ColumnKind::Indicator);
    }
    for y in years.iter().skip(1) {
        names.push(format!("year_{y}"));
        kinds.push(ColumnKind::Indicator);
    }
    let p = names.len();
    let mut data = Vec::with_capacity(ds.len() * p);
    for r in &ds.rows {
        data.extend(covs.iter().map(|&j| r.covariates[j]));
        if spec.p_throws {
            data.push(f64::from(u8::from(r.p_throws == Hand::Right)));
        }
        if spec.stand {
            data.push(f64::from(u8::from(r.stand == Hand::Right)));
        }
        for y in years.iter().skip(1) {
            data.push(f64::from(u8::from(r.key.game_year == *y)));
        }
    }
    Design { matrix: RowMatrix::new(names, ds.len(), data), kinds }
}
