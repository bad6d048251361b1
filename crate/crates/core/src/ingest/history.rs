use serde::{Deserialize, Serialize};

use crate::dataset::Instrument;
use crate::stats::RunningStats;

pub const BATTER_STATS: [&str; 7] = ["launch_speed", "launch_angle", "spray_angle", "woba", "babip", "walk", "strikeout"];
pub const PITCHER_STATS: [&str; 8] =
    ["release_speed", "release_spin_rate", "plate_x", "plate_z", "woba", "babip", "walk", "strikeout"];

/// Names of the lagged covariates, in dataset column order.
pub fn covariate_names() -> Vec<String> {
    let block = |role: &str, stats: &[&str]| {
        stats.iter().flat_map(move |s| [format!("{role}_{s}_mean"), format!("{role}_{s}_sd")]).collect::<Vec<_>>()
    };
    let mut names = block("batter", &BATTER_STATS);
    names.extend(block("pitcher", &PITCHER_STATS));
    names
}

/// Skill results of one finished plate appearance: wOBA, BABIP, walk and
/// strikeout indicators.
pub type Skill = [Option<f64>; 4];

/// What one plate appearance contributes to the participants' histories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PaContribution {
    /// launch_speed, launch_angle, spray_angle of the batted ball.
    pub batted: [Option<f64>; 3],
    pub skill: Skill,
    /// release_speed, release_spin_rate, plate_x, plate_z per pitch.
    pub pitches: Vec<[Option<f64>; 4]>,
}

impl PaContribution {
    pub fn has_hit_trajectory(&self) -> bool {
        self.batted.iter().all(Option::is_some)
    }

    pub fn has_pitch_trajectory(&self) -> bool {
        self.pitches.iter().any(|p| p.iter().all(Option::is_some))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatterHistory {
    stats: [RunningStats; 7],
    pub plate_appearances: usize,
}

impl BatterHistory {
    pub fn push(&mut self, pa: &PaContribution) {
        let values = pa.batted.iter().chain(pa.skill.iter());
        for (acc, v) in self.stats.iter_mut().zip(values) {
            if let Some(v) = v {
                acc.push(*v);
            }
        }
        self.plate_appearances += 1;
    }

    pub fn snapshot(&self) -> Vec<Option<f64>> {
        self.stats.iter().flat_map(|w| [w.mean(), w.sd()]).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PitcherHistory {
    stats: [RunningStats; 8],
    pub plate_appearances: usize,
}

impl PitcherHistory {
    /// Trajectory statistics take one observation per pitch, skill
    /// statistics one per plate appearance.
    pub fn push(&mut self, pa: &PaContribution) {
        for pitch in &pa.pitches {
            for (acc, v) in self.stats[..4].iter_mut().zip(pitch) {
                if let Some(v) = v {
                    acc.push(*v);
                }
            }
        }
        for (acc, v) in self.stats[4..].iter_mut().zip(&pa.skill) {
            if let Some(v) = v {
                acc.push(*v);
            }
        }
        self.plate_appearances += 1;
    }

    pub fn snapshot(&self) -> Vec<Option<f64>> {
        self.stats.iter().flat_map(|w| [w.mean(), w.sd()]).collect()
    }
}

/// Lagged mean and SD of `values[..up_to]`.
pub fn cumulative_covariates(values: &[f64], up_to: usize) -> (Option<f64>, Option<f64>) {
    let mut w = RunningStats::default();
    for &v in &values[..up_to.min(values.len())] {
        w.push(v);
    }
    (w.mean(), w.sd())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TeamHistory {
    pub shifted: u64,
    pub total: u64,
}

impl TeamHistory {
    pub fn push(&mut self, treated: bool) {
        self.shifted += u64::from(treated);
        self.total += 1;
    }

    pub fn propensity(&self) -> Option<Instrument> {
        if self.total == 0 {
            return None;
        }
        let n = self.total as f64;
        let rate = self.shifted as f64 / n;
        Some(Instrument { rate, std_error: (rate * (1.0 - rate) / n).sqrt() })
    }
}

/// Shift rate over `history[..up_to]`.
pub fn team_shift_propensity(history: &[bool], up_to: usize) -> Option<Instrument> {
    let mut t = TeamHistory::default();
    for &h in &history[..up_to.min(history.len())] {
        t.push(h);
    }
    t.propensity()
}
