use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Hand;
use crate::error::{Error, Result};

/// One pitch in the public pitch-by-pitch schema. Extra columns in the
/// input are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchRecord {
    #[serde(alias = "game_id")]
    pub game_pk: u64,
    /// ISO date, so lexical order is chronological.
    pub game_date: String,
    pub game_year: i32,
    pub inning: u32,
    /// "Top" or "Bot".
    pub inning_topbot: String,
    pub home_team: String,
    pub away_team: String,
    #[serde(alias = "batter_id")]
    pub batter: u64,
    #[serde(alias = "pitcher_id")]
    pub pitcher: u64,
    pub stand: Hand,
    pub p_throws: Hand,
    pub if_fielding_alignment: Option<String>,
    pub at_bat_number: u32,
    pub pitch_number: u32,
    pub delta_run_exp: Option<f64>,
    pub launch_speed: Option<f64>,
    pub launch_angle: Option<f64>,
    pub hc_x: Option<f64>,
    pub hc_y: Option<f64>,
    pub plate_x: Option<f64>,
    pub plate_z: Option<f64>,
    pub release_speed: Option<f64>,
    pub release_spin_rate: Option<f64>,
    pub events: Option<String>,
    pub woba_value: Option<f64>,
    pub woba_denom: Option<f64>,
    pub babip_value: Option<f64>,
}

impl PitchRecord {
    /// The defending team: home while the visitors bat in the top half.
    pub fn fielding_team(&self) -> &str {
        if self.inning_topbot.eq_ignore_ascii_case("top") {
            &self.home_team
        } else {
            &self.away_team
        }
    }

    pub fn alignment(&self) -> Result<Alignment> {
        Alignment::parse(self.if_fielding_alignment.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alignment {
    Standard,
    Strategic,
    InfieldShift,
    Missing,
}

impl Alignment {
    pub fn parse(label: Option<&str>) -> Result<Self> {
        let Some(s) = label.map(str::trim).filter(|s| !s.is_empty()) else {
            return Ok(Alignment::Missing);
        };
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Alignment::Standard),
            "strategic" => Ok(Alignment::Strategic),
            "infield shift" => Ok(Alignment::InfieldShift),
            _ => Err(Error::Schema(format!("unknown if_fielding_alignment `{s}`"))),
        }
    }

    /// Strategic alignments count as not shifted.
    pub fn shifted(self) -> Option<bool> {
        match self {
            Alignment::InfieldShift => Some(true),
            Alignment::Standard | Alignment::Strategic => Some(false),
            Alignment::Missing => None,
        }
    }
}

pub fn read_pitches(path: &Path) -> Result<Vec<PitchRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::from(e).context(format!("{} record {}", path.display(), i + 1))))
        .collect()
}

pub fn write_pitches(pitches: &[PitchRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in pitches {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Field-centre constants of the hit-coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprayConfig {
    /// hc_x of home plate.
    pub home_x: f64,
    /// hc_y of home plate.
    pub home_y: f64,
    /// Multiplier applied to the raw angle in degrees.
    pub scale: f64,
}

impl Default for SprayConfig {
    fn default() -> Self {
        Self { home_x: 125.42, home_y: 198.27, scale: 0.75 }
    }
}

/// Horizontal direction of a batted ball in degrees. 0 points at second
/// base; negative is the batter's pull side for either hand.
pub fn spray_angle(hc_x: Option<f64>, hc_y: Option<f64>, stand: Hand, cfg: &SprayConfig) -> Result<f64> {
    let (Some(x), Some(y)) = (hc_x, hc_y) else {
        return Err(Error::MissingCoordinates);
    };
    let depth = cfg.home_y - y;
    if !(depth > 0.0) {
        return Err(Error::InvalidCoordinates(y));
    }
    let raw = ((x - cfg.home_x) / depth).atan().to_degrees() * cfg.scale;
    Ok(match stand {
        Hand::Right => raw,
        Hand::Left => -raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_away_is_zero() {
        let c = SprayConfig::default();
        for h in [Hand::Left, Hand::Right] {
            assert_eq!(spray_angle(Some(c.home_x), Some(100.0), h, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn pull_side_is_negative_for_both_hands() {
        let c = SprayConfig::default();
        // Toward the third-base line for a right-handed batter.
        let r = spray_angle(Some(60.0), Some(120.0), Hand::Right, &c).unwrap();
        assert!(r < 0.0);
        // Mirror image for a left-handed batter.
        let l = spray_angle(Some(2.0 * c.home_x - 60.0), Some(120.0), Hand::Left, &c).unwrap();
        assert_eq!(l, r);
        assert!(r > -90.0);
    }

    #[test]
    fn missing_coordinates() {
        let c = SprayConfig::default();
        assert!(matches!(spray_angle(None, Some(1.0), Hand::Left, &c), Err(Error::MissingCoordinates)));
        assert!(matches!(spray_angle(Some(1.0), Some(250.0), Hand::Left, &c), Err(Error::InvalidCoordinates(_))));
    }

    #[test]
    fn strategic_is_not_shifted() {
        assert_eq!(Alignment::parse(Some("Strategic")).unwrap().shifted(), Some(false));
        assert_eq!(Alignment::parse(Some("Infield shift")).unwrap().shifted(), Some(true));
        assert_eq!(Alignment::parse(Some("")).unwrap().shifted(), None);
        assert!(Alignment::parse(Some("Four outfielders")).is_err());
    }
}
