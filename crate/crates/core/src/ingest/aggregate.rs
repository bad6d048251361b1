use serde::{Deserialize, Serialize};

use super::history::{PaContribution, Skill};
use super::pitch::{spray_angle, PitchRecord, SprayConfig};
use crate::dataset::{Hand, PaKey};
use crate::error::{Error, Result};

/// Why a plate appearance cannot be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Excluded {
    MissingAlignment,
    MissingDeltaRe,
    MissingPitches,
    PlayerChange,
}

impl Excluded {
    /// Treatment or outcome is undefined.
    pub fn undefined_variables(self) -> bool {
        matches!(self, Excluded::MissingAlignment | Excluded::MissingDeltaRe)
    }
}

/// A plate appearance built from its pitches. `defect` is set when the
/// appearance is unusable for analysis; it still feeds player histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaDraft {
    pub key: PaKey,
    pub game_date: String,
    pub stand: Hand,
    pub p_throws: Hand,
    pub treated: Option<bool>,
    pub outcome: Option<f64>,
    pub defect: Option<Excluded>,
    pub contribution: PaContribution,
}

fn skill(last: &PitchRecord) -> Skill {
    let Some(event) = last.events.as_deref().map(str::trim).filter(|e| !e.is_empty()) else {
        return [None; 4];
    };
    let woba = (last.woba_denom == Some(1.0)).then(|| last.woba_value.unwrap_or(0.0));
    let babip = Some(last.babip_value.unwrap_or(0.0));
    let walk = Some(f64::from(u8::from(matches!(event, "walk" | "intent_walk"))));
    let strikeout = Some(f64::from(u8::from(event.starts_with("strikeout"))));
    [woba, babip, walk, strikeout]
}

/// Collapse the pitches of one plate appearance, sorted by pitch_number.
pub fn aggregate_to_pa(pitches: &[PitchRecord], spray: &SprayConfig) -> Result<PaDraft> {
    let first = pitches.first().ok_or_else(|| Error::EmptyInput("plate appearance without pitches".into()))?;
    let last = pitches.last().expect("non-empty");

    let mut alignments = Vec::with_capacity(pitches.len());
    for p in pitches {
        alignments.push(p.alignment()?.shifted());
    }
    let treated = alignments.iter().copied().collect::<Option<Vec<bool>>>().map(|a| a.iter().any(|&s| s));
    let outcome = pitches.iter().map(|p| p.delta_run_exp).sum::<Option<f64>>();

    let contiguous = pitches.iter().enumerate().all(|(i, p)| p.pitch_number as usize == i + 1);
    let same_players = pitches
        .iter()
        .all(|p| p.batter == first.batter && p.pitcher == first.pitcher && p.stand == first.stand && p.p_throws == first.p_throws);

    let defect = if treated.is_none() {
        Some(Excluded::MissingAlignment)
    } else if outcome.is_none() {
        Some(Excluded::MissingDeltaRe)
    } else if !contiguous {
        Some(Excluded::MissingPitches)
    } else if !same_players {
        Some(Excluded::PlayerChange)
    } else {
        None
    };

    let contribution = PaContribution {
        batted: [last.launch_speed, last.launch_angle, spray_angle(last.hc_x, last.hc_y, first.stand, spray).ok()],
        skill: skill(last),
        pitches: pitches.iter().map(|p| [p.release_speed, p.release_spin_rate, p.plate_x, p.plate_z]).collect(),
    };

    Ok(PaDraft {
        key: PaKey {
            game_year: first.game_year,
            game_id: first.game_pk,
            at_bat_number: first.at_bat_number,
            batter_id: first.batter,
            pitcher_id: first.pitcher,
            fielding_team: first.fielding_team().to_string(),
        },
        game_date: first.game_date.clone(),
        stand: first.stand,
        p_throws: first.p_throws,
        treated,
        outcome,
        defect,
        contribution,
    })
}
