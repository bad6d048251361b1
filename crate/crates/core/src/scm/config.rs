use serde::{Deserialize, Serialize};

use crate::dataset::Hand;
use crate::error::{Error, Result};

/// One year x batter hand x pitcher hand cell of the simulated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub year: i32,
    pub stand: Hand,
    pub p_throws: Hand,
    /// Relative size of the cell.
    pub weight: f64,
    /// Expected share of treated units in the cell.
    pub treated_rate: f64,
}

/// Plate appearances by year, batter hand, pitcher hand: (not shifted, shifted).
pub const TABLE2: [(i32, Hand, Hand, u32, u32); 32] = {
    use Hand::{Left as L, Right as R};
    [
        (2015, R, R, 60949, 3203),
        (2016, R, R, 62505, 5406),
        (2017, R, R, 64794, 4999),
        (2018, R, R, 57506, 7683),
        (2019, R, R, 54684, 11612),
        (2020, R, R, 16730, 5467),
        (2021, R, R, 51925, 11762),
        (2022, R, R, 53652, 14509),
        (2015, R, L, 24589, 1219),
        (2016, R, L, 24143, 1957),
        (2017, R, L, 24643, 1314),
        (2018, R, L, 25711, 3040),
        (2019, R, L, 22558, 5292),
        (2020, R, L, 6505, 2775),
        (2021, R, L, 23513, 6606),
        (2022, R, L, 21700, 6785),
        (2015, L, R, 34140, 8975),
        (2016, L, R, 30669, 11273),
        (2017, L, R, 30868, 10914),
        (2018, L, R, 26633, 13773),
        (2019, L, R, 20721, 19459),
        (2020, L, R, 6222, 8323),
        (2021, L, R, 17040, 23018),
        (2022, L, R, 17645, 23251),
        (2015, L, L, 11013, 2383),
        (2016, L, L, 9541, 2688),
        (2017, L, L, 9792, 2622),
        (2018, L, L, 10134, 3363),
        (2019, L, L, 8613, 4737),
        (2020, L, L, 2396, 2189),
        (2021, L, L, 7482, 6706),
        (2022, L, L, 6505, 5614),
    ]
};

pub fn table2_cells() -> Vec<CellSpec> {
    let mut cells: Vec<CellSpec> = TABLE2
        .iter()
        .map(|&(year, stand, p_throws, no, yes)| CellSpec {
            year,
            stand,
            p_throws,
            weight: f64::from(no + yes),
            treated_rate: f64::from(yes) / f64::from(no + yes),
        })
        .collect();
    cells.sort_by(|a, b| (a.year, a.stand, a.p_throws).cmp(&(b.year, b.stand, b.p_throws)));
    cells
}

pub fn table2_total() -> usize {
    TABLE2.iter().map(|r| (r.3 + r.4) as usize).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSpec {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

fn confounder(name: &str, mean: f64, sd: f64) -> ConfounderSpec {
    ConfounderSpec { name: name.into(), mean, sd }
}

/// Eight confounders with the marginal means and SDs of the real covariates.
pub fn default_confounders() -> Vec<ConfounderSpec> {
    vec![
        confounder("batter_launch_speed_mean", 83.79, 3.00),
        confounder("batter_launch_angle_mean", 15.90, 5.23),
        confounder("batter_spray_angle_mean", -3.33, 3.95),
        confounder("batter_babip_mean", 0.19, 0.05),
        confounder("pitcher_release_speed_mean", 88.75, 2.89),
        confounder("pitcher_release_spin_rate_mean", 2218.85, 183.90),
        confounder("pitcher_plate_x_mean", 0.04, 0.16),
        confounder("pitcher_babip_mean", 0.19, 0.05),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstrumentSpec {
    pub n_teams: usize,
    /// Beta concentration of team propensities around the year's rate.
    pub concentration: f64,
}

impl Default for InstrumentSpec {
    fn default() -> Self {
        Self { n_teams: 30, concentration: 15.0 }
    }
}

/// Treatment logit: cell intercept + coefficients . standardized C
/// + instrument_coef * (logit Z - logit year rate) + u_coef * U.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreatmentSpec {
    pub coefficients: Vec<f64>,
    pub instrument_coef: f64,
    pub u_coef: f64,
}

impl Default for TreatmentSpec {
    fn default() -> Self {
        Self { coefficients: vec![0.15, 0.25, -0.45, -0.10, 0.05, 0.05, 0.10, 0.0], instrument_coef: 0.8, u_coef: 0.0 }
    }
}

/// Untreated outcome: intercept + coefficients . standardized C
/// + u_strength * U + exclusion_violation * (Z - year rate) + noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeSpec {
    /// `None` centres the observed outcome at zero in expectation.
    pub intercept: Option<f64>,
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    pub u_strength: f64,
    pub exclusion_violation: f64,
}

pub const DEFAULT_OUTCOME_COEFS: [f64; 8] = [0.06, 0.04, 0.03, 0.05, -0.03, -0.02, 0.01, 0.04];
/// Target SD of the observed outcome.
pub const OUTCOME_SD: f64 = 0.48;

/// Noise SD that brings the outcome SD to `OUTCOME_SD` given the other
/// variance sources.
pub fn calibrated_noise_sd(coefficients: &[f64], u_strength: f64) -> f64 {
    let explained: f64 = coefficients.iter().map(|g| g * g).sum::<f64>() + u_strength * u_strength;
    (OUTCOME_SD * OUTCOME_SD - explained).sqrt()
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        Self {
            intercept: None,
            coefficients: DEFAULT_OUTCOME_COEFS.to_vec(),
            noise_sd: calibrated_noise_sd(&DEFAULT_OUTCOME_COEFS, 0.0),
            u_strength: 0.0,
            exclusion_violation: 0.0,
        }
    }
}

/// Unit-level treatment effect tau(C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectSpec {
    Constant { value: f64 },
    Handedness { left: f64, right: f64 },
    /// intercept + slopes . standardized C
    Linear { intercept: f64, slopes: Vec<f64> },
}

impl EffectSpec {
    pub fn tau(&self, stand: Hand, c_std: &[f64]) -> f64 {
        match self {
            EffectSpec::Constant { value } => *value,
            EffectSpec::Handedness { left, right } => match stand {
                Hand::Left => *left,
                Hand::Right => *right,
            },
            EffectSpec::Linear { intercept, slopes } => intercept + slopes.iter().zip(c_std).map(|(a, b)| a * b).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScmConfig {
    pub seed: u64,
    pub n_units: usize,
    /// Treatment probabilities must lie in (eps, 1 - eps).
    pub positivity_eps: f64,
    pub cells: Vec<CellSpec>,
    pub confounders: Vec<ConfounderSpec>,
    pub instrument: InstrumentSpec,
    pub treatment: TreatmentSpec,
    pub outcome: OutcomeSpec,
    pub effect: EffectSpec,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl ScmConfig {
    /// Constant effect -0.03, no unmeasured confounding, 20,000 units.
    pub fn standard() -> Self {
        Self {
            seed: 0,
            n_units: 20_000,
            positivity_eps: 1e-6,
            cells: table2_cells(),
            confounders: default_confounders(),
            instrument: InstrumentSpec::default(),
            treatment: TreatmentSpec::default(),
            outcome: OutcomeSpec::default(),
            effect: EffectSpec::Constant { value: -0.03 },
        }
    }

    /// Standard model at the full size of the real data.
    pub fn table2_calibrated() -> Self {
        Self { n_units: table2_total(), ..Self::standard() }
    }

    /// Standard model plus a latent U that raises both the chance of
    /// treatment and the outcome.
    pub fn unmeasured_confounding() -> Self {
        let mut c = Self::standard();
        c.treatment.u_coef = 1.0;
        c.outcome.u_strength = UNMEASURED_U_STRENGTH;
        c.outcome.noise_sd = calibrated_noise_sd(&c.outcome.coefficients, UNMEASURED_U_STRENGTH);
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "standard" => Ok(Self::standard()),
            "table2_calibrated" => Ok(Self::table2_calibrated()),
            "unmeasured_confounding" => Ok(Self::unmeasured_confounding()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected standard, table2_calibrated or unmeasured_confounding)"
            ))),
        }
    }

    /// Parse a TOML config. A top-level `preset` key selects the base
    /// configuration; every other key overrides it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut user: toml::Table = toml::from_str(text)?;
        let base = match user.remove("preset") {
            None => Self::standard(),
            Some(toml::Value::String(p)) => Self::preset(&p)?,
            Some(other) => return Err(Error::InvalidConfig(format!("preset must be a string, got {other}"))),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let k = self.confounders.len();
        if self.n_units == 0 {
            return bad("n_units must be positive".into());
        }
        if self.cells.is_empty() {
            return bad("at least one cell is required".into());
        }
        if !(self.positivity_eps > 0.0 && self.positivity_eps < 0.5) {
            return bad(format!("positivity_eps {} outside (0, 0.5)", self.positivity_eps));
        }
        for c in &self.cells {
            if !(c.weight > 0.0) || !(c.treated_rate > 0.0 && c.treated_rate < 1.0) {
                return bad(format!("cell {} {}/{} needs weight > 0 and rate in (0, 1)", c.year, c.stand, c.p_throws));
            }
        }
        if self.confounders.iter().any(|c| !(c.sd > 0.0)) {
            return bad("confounder SDs must be positive".into());
        }
        if self.treatment.coefficients.len() != k || self.outcome.coefficients.len() != k {
            return bad(format!("treatment and outcome need {k} confounder coefficients"));
        }
        if let EffectSpec::Linear { slopes, .. } = &self.effect {
            if slopes.len() != k {
                return bad(format!("linear effect needs {k} slopes"));
            }
        }
        if self.instrument.n_teams < 2 || !(self.instrument.concentration > 0.0) {
            return bad("instrument needs >= 2 teams and a positive concentration".into());
        }
        if !(self.outcome.noise_sd >= 0.0) {
            return bad("noise_sd must be >= 0".into());
        }
        Ok(())
    }
}

/// Chosen so the population OLS coefficient on T, given the measured
/// confounders, overstates the effect by about 0.02 runs.
pub const UNMEASURED_U_STRENGTH: f64 = 0.0245;

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
