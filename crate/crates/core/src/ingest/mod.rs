//! Pitch-level CSV to plate-appearance analysis table.
//!
//! Pitches are grouped into plate appearances, histories are accumulated
//! per season in chronological order, and the exclusion cascade removes
//! rows whose treatment, outcome or lagged covariates are not usable.

mod aggregate;
mod exclusions;
mod history;
mod pitch;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_to_pa, Excluded, PaDraft};
pub use exclusions::{apply_exclusions, Candidate, ExclusionLedger, LedgerStage, Rule, CASCADE};
pub use history::{
    covariate_names, cumulative_covariates, team_shift_propensity, BatterHistory, PaContribution, PitcherHistory, TeamHistory, BATTER_STATS,
    PITCHER_STATS,
};
pub use pitch::{read_pitches, spray_angle, write_pitches, Alignment, PitchRecord, SprayConfig};
pub use synth::{synthetic_pitches, SynthConfig};

use crate::dataset::AnalysisDataset;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub spray: SprayConfig,
    /// Prior plate appearances in season required of both batter and pitcher.
    pub min_prior_pa: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { spray: SprayConfig::default(), min_prior_pa: 10 }
    }
}

/// Plate appearances of one season, in chronological order, with lagged
/// histories attached.
pub fn season_candidates(mut pitches: Vec<PitchRecord>, cfg: &IngestConfig) -> Result<Vec<Candidate>> {
    pitches.sort_by(|a, b| {
        (&a.game_date, a.game_pk, a.at_bat_number, a.pitch_number).cmp(&(&b.game_date, b.game_pk, b.at_bat_number, b.pitch_number))
    });

    let mut stands: HashMap<u64, HashSet<_>> = HashMap::new();
    let mut throws: HashMap<u64, HashSet<_>> = HashMap::new();
    for p in &pitches {
        stands.entry(p.batter).or_default().insert(p.stand);
        throws.entry(p.pitcher).or_default().insert(p.p_throws);
    }

    let drafts = pitches
        .chunk_by(|a, b| a.game_pk == b.game_pk && a.at_bat_number == b.at_bat_number)
        .map(|pa| aggregate_to_pa(pa, &cfg.spray))
        .collect::<Result<Vec<_>>>()?;

    let mut batter_tracked = HashSet::new();
    let mut pitcher_tracked = HashSet::new();
    for d in &drafts {
        if d.contribution.has_hit_trajectory() {
            batter_tracked.insert(d.key.batter_id);
        }
        if d.contribution.has_pitch_trajectory() {
            pitcher_tracked.insert(d.key.pitcher_id);
        }
    }

    let mut batters: HashMap<u64, BatterHistory> = HashMap::new();
    let mut pitchers: HashMap<u64, PitcherHistory> = HashMap::new();
    let mut teams: HashMap<String, TeamHistory> = HashMap::new();
    let mut out = Vec::with_capacity(drafts.len());
    for draft in drafts {
        let b = batters.entry(draft.key.batter_id).or_default();
        let p = pitchers.entry(draft.key.pitcher_id).or_default();
        let team = teams.entry(draft.key.fielding_team.clone()).or_default();

        let mut covariates = b.snapshot();
        covariates.extend(p.snapshot());
        let cand = Candidate {
            covariates,
            instrument: team.propensity(),
            batter_prior: b.plate_appearances,
            pitcher_prior: p.plate_appearances,
            switch_hitter: stands[&draft.key.batter_id].len() > 1,
            ambidextrous_pitcher: throws[&draft.key.pitcher_id].len() > 1,
            batter_tracked: batter_tracked.contains(&draft.key.batter_id),
            pitcher_tracked: pitcher_tracked.contains(&draft.key.pitcher_id),
            draft,
        };

        b.push(&cand.draft.contribution);
        p.push(&cand.draft.contribution);
        if let Some(t) = cand.draft.treated {
            team.push(t);
        }
        out.push(cand);
    }
    Ok(out)
}

/// Candidates for all seasons, processed in parallel and concatenated in
/// season order.
pub fn candidates(pitches: Vec<PitchRecord>, cfg: &IngestConfig) -> Result<Vec<Candidate>> {
    let mut seasons: BTreeMap<i32, Vec<PitchRecord>> = BTreeMap::new();
    for p in pitches {
        seasons.entry(p.game_year).or_default().push(p);
    }
    let per_season = seasons.into_values().collect::<Vec<_>>().into_par_iter().map(|s| season_candidates(s, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(per_season.into_iter().flatten().collect())
}

pub fn ingest(pitches: Vec<PitchRecord>, cfg: &IngestConfig) -> Result<(AnalysisDataset, ExclusionLedger)> {
    let cands = candidates(pitches, cfg)?;
    apply_exclusions(&cands, &covariate_names(), &CASCADE, cfg.min_prior_pa)
}

pub fn ingest_file(path: &Path, cfg: &IngestConfig) -> Result<(AnalysisDataset, ExclusionLedger)> {
    ingest(read_pitches(path)?, cfg)
}
