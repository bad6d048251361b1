use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisDataset, Hand};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Matching,
    Iptw,
    Iv,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Matching => "matching",
            Method::Iptw => "iptw",
            Method::Iv => "iv",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" | "matching" => Ok(Method::Matching),
            "iptw" => Ok(Method::Iptw),
            "iv" => Ok(Method::Iv),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Batter-handedness subgroup an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subgroup {
    #[serde(rename = "LH")]
    Left,
    #[serde(rename = "RH")]
    Right,
    /// Both handedness groups analysed together, with handedness as a covariate.
    #[serde(rename = "pooled")]
    Pooled,
}

impl Subgroup {
    pub fn contains(self, stand: Hand) -> bool {
        match self {
            Subgroup::Left => stand == Hand::Left,
            Subgroup::Right => stand == Hand::Right,
            Subgroup::Pooled => true,
        }
    }

    pub fn is_pooled(self) -> bool {
        self == Subgroup::Pooled
    }

    pub fn select(self, ds: &AnalysisDataset) -> AnalysisDataset {
        ds.filter(|r| self.contains(r.stand))
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subgroup::Left => "LH",
            Subgroup::Right => "RH",
            Subgroup::Pooled => "pooled",
        })
    }
}

/// A point estimate of the effect of treatment on the treated, in runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EttEstimate {
    pub method: Method,
    pub subgroup: Subgroup,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl EttEstimate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        method: Method,
        subgroup: Subgroup,
        estimate: f64,
        std_error: f64,
        interval: (f64, f64),
        n_treated: usize,
        n_control: usize,
    ) -> Result<Self> {
        let (mut lower, mut upper) = interval;
        // Rounding can leave a near-constant bootstrap a few ulps off.
        let slack = 1e-12 * estimate.abs().max(1.0);
        if lower > estimate && lower - estimate <= slack {
            lower = estimate;
        }
        if upper < estimate && estimate - upper <= slack {
            upper = estimate;
        }
        if !(lower <= estimate && estimate <= upper) {
            return Err(Error::InvalidInterval { estimate, lower, upper });
        }
        if !(std_error >= 0.0) {
            return Err(Error::InvalidInterval { estimate, lower: std_error, upper: std_error });
        }
        Ok(Self {
            method,
            subgroup,
            estimate,
            std_error,
            lower,
            upper,
            n_treated,
            n_control,
            diagnostics: BTreeMap::new(),
        })
    }

    /// Normal-theory interval, estimate ± 1.96 SE.
    pub fn wald(method: Method, subgroup: Subgroup, estimate: f64, std_error: f64, n_treated: usize, n_control: usize) -> Result<Self> {
        let half = 1.96 * std_error;
        Self::new(method, subgroup, estimate, std_error, (estimate - half, estimate + half), n_treated, n_control)
    }

    pub fn with_diagnostic(mut self, key: &str, value: impl Serialize) -> Self {
        self.diagnostics
            .insert(key.to_owned(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_must_contain_estimate() {
        assert!(EttEstimate::new(Method::Iptw, Subgroup::Left, 0.5, 0.1, (0.6, 0.9), 1, 1).is_err());
        assert!(EttEstimate::new(Method::Iptw, Subgroup::Left, 0.5, -0.1, (0.4, 0.6), 1, 1).is_err());
        let e = EttEstimate::wald(Method::Matching, Subgroup::Right, -0.03, 0.01, 10, 30).unwrap();
        assert!((e.lower + 0.0496).abs() < 1e-12);
        assert!(e.covers(-0.03));
    }

    #[test]
    fn rounding_gap_is_absorbed() {
        let e = EttEstimate::new(Method::Iv, Subgroup::Left, -0.04, 0.0, (-0.04 + 2e-16, -0.04 + 4e-16), 1, 1).unwrap();
        assert_eq!(e.lower, -0.04);
    }
}
