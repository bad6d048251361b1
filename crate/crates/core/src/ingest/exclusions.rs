use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::PaDraft;
use crate::dataset::{AnalysisDataset, Instrument, PlateAppearance};
use crate::error::{Error, Result};

/// A plate appearance with its lagged history attached, before exclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub draft: PaDraft,
    pub covariates: Vec<Option<f64>>,
    pub instrument: Option<Instrument>,
    pub batter_prior: usize,
    pub pitcher_prior: usize,
    pub switch_hitter: bool,
    pub ambidextrous_pitcher: bool,
    pub batter_tracked: bool,
    pub pitcher_tracked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    UndefinedVariables,
    IncompletePitchSequence,
    SwitchOrAmbidextrous,
    BatterUntracked,
    PitcherUntracked,
    ShortHistory,
    MissingCovariate,
}

pub const CASCADE: [Rule; 7] = [
    Rule::UndefinedVariables,
    Rule::IncompletePitchSequence,
    Rule::SwitchOrAmbidextrous,
    Rule::BatterUntracked,
    Rule::PitcherUntracked,
    Rule::ShortHistory,
    Rule::MissingCovariate,
];

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::UndefinedVariables => "treatment and outcome defined",
            Rule::IncompletePitchSequence => "complete pitch sequence, single batter and pitcher",
            Rule::SwitchOrAmbidextrous => "no switch hitters or ambidextrous pitchers",
            Rule::BatterUntracked => "batter has hit trajectory data in season",
            Rule::PitcherUntracked => "pitcher has pitch trajectory data in season",
            Rule::ShortHistory => "batter and pitcher have enough prior plate appearances",
            Rule::MissingCovariate => "no missing covariates",
        }
    }

    /// Whether the row fails this rule. Rules look only at the row, so the
    /// surviving set does not depend on the order they run in.
    pub fn drops(self, c: &Candidate, min_prior: usize) -> bool {
        match self {
            Rule::UndefinedVariables => c.draft.defect.is_some_and(|d| d.undefined_variables()),
            Rule::IncompletePitchSequence => c.draft.defect.is_some_and(|d| !d.undefined_variables()),
            Rule::SwitchOrAmbidextrous => c.switch_hitter || c.ambidextrous_pitcher,
            Rule::BatterUntracked => !c.batter_tracked,
            Rule::PitcherUntracked => !c.pitcher_tracked,
            Rule::ShortHistory => c.batter_prior < min_prior || c.pitcher_prior < min_prior,
            Rule::MissingCovariate => c.instrument.is_none() || c.covariates.iter().any(Option::is_none),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerStage {
    pub rule: String,
    pub remaining: usize,
}

/// Rows remaining after each stage. The first stage counts every plate
/// appearance found.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionLedger {
    pub stages: Vec<LedgerStage>,
}

impl ExclusionLedger {
    pub fn final_count(&self) -> usize {
        self.stages.last().map_or(0, |s| s.remaining)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Run the rules in `order`, which must name each rule exactly once.
pub fn apply_exclusions(
    candidates: &[Candidate],
    covariate_names: &[String],
    order: &[Rule],
    min_prior: usize,
) -> Result<(AnalysisDataset, ExclusionLedger)> {
    if order.len() != CASCADE.len() || CASCADE.iter().any(|r| !order.contains(r)) {
        return Err(Error::InvalidConfig(format!("exclusion order must list each of the {} rules once", CASCADE.len())));
    }
    let mut keep: Vec<&Candidate> = candidates.iter().collect();
    let mut ledger = ExclusionLedger { stages: vec![LedgerStage { rule: "all plate appearances".into(), remaining: keep.len() }] };
    for &rule in order {
        keep.retain(|c| !rule.drops(c, min_prior));
        ledger.stages.push(LedgerStage { rule: rule.name().into(), remaining: keep.len() });
    }
    if keep.is_empty() {
        return Err(Error::EmptyAfterExclusion);
    }
    let rows = keep
        .into_iter()
        .map(|c| PlateAppearance {
            key: c.draft.key.clone(),
            stand: c.draft.stand,
            p_throws: c.draft.p_throws,
            treated: c.draft.treated.expect("defined after exclusions"),
            outcome: c.draft.outcome.expect("defined after exclusions"),
            instrument: c.instrument.expect("defined after exclusions"),
            covariates: c.covariates.iter().map(|v| v.expect("defined after exclusions")).collect(),
        })
        .collect();
    let ds = AnalysisDataset::new(covariate_names.to_vec(), rows)?;
    Ok((ds, ledger))
}
