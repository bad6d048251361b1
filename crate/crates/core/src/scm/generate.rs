use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisDataset, Hand, Instrument, PaKey, PlateAppearance};
use crate::design::{build_design, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg::wls;
use crate::propensity::logistic;
use crate::rng::stream;
use crate::stats::{mean, sample_sd};

use super::config::{EffectSpec, ScmConfig};

const BLOCK: usize = 4096;
/// Plate appearances per simulated game.
const PA_PER_GAME: usize = 76;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// E[logistic(a + s X)] for X ~ N(0, 1) and its derivative in `a`, by the
/// trapezoid rule on [-10, 10].
fn gaussian_logistic(a: f64, s: f64) -> (f64, f64) {
    const STEPS: usize = 800;
    let h = 20.0 / STEPS as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let (mut m, mut d) = (0.0, 0.0);
    for k in 0..=STEPS {
        let x = -10.0 + k as f64 * h;
        let w = if k == 0 || k == STEPS { 0.5 } else { 1.0 } * h * (-0.5 * x * x).exp() / norm;
        let p = logistic(a + s * x);
        m += w * p;
        d += w * p * (1.0 - p);
    }
    (m, d)
}

/// Everything about the simulated population that is fixed before units
/// are drawn: team propensities and calibrated cell intercepts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Population {
    pub years: Vec<i32>,
    /// Expected treated share per year.
    pub year_rate: BTreeMap<i32, f64>,
    /// Team shift propensity per year, indexed by team.
    pub team_z: BTreeMap<i32, Vec<f64>>,
    /// Treatment-logit intercept per cell.
    pub alpha: Vec<f64>,
    /// SD of the Gaussian part of the treatment logit.
    pub logit_sd: f64,
    /// Units allocated to each cell.
    pub allocation: Vec<usize>,
}

fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = n - alloc.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

impl Population {
    pub fn new(cfg: &ScmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut years: Vec<i32> = cfg.cells.iter().map(|c| c.year).collect();
        years.sort_unstable();
        years.dedup();
        let mut year_rate = BTreeMap::new();
        for &y in &years {
            let (w, wr) = cfg
                .cells
                .iter()
                .filter(|c| c.year == y)
                .fold((0.0, 0.0), |(a, b), c| (a + c.weight, b + c.weight * c.treated_rate));
            year_rate.insert(y, wr / w);
        }
        let kappa = cfg.instrument.concentration;
        let mut team_z = BTreeMap::new();
        for (yi, &y) in years.iter().enumerate() {
            let m = year_rate[&y];
            let beta = Beta::new(m * kappa, (1.0 - m) * kappa).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut rng = stream(cfg.seed, "scm/teams", yi as u64);
            let z: Vec<f64> = (0..cfg.instrument.n_teams).map(|_| beta.sample(&mut rng).clamp(1e-6, 1.0 - 1e-6)).collect();
            team_z.insert(y, z);
        }
        let logit_sd = (cfg.treatment.coefficients.iter().map(|b| b * b).sum::<f64>() + cfg.treatment.u_coef.powi(2)).sqrt();
        let alpha = cfg
            .cells
            .iter()
            .map(|c| {
                let shifts: Vec<f64> = team_z[&c.year]
                    .iter()
                    .map(|&z| cfg.treatment.instrument_coef * (logit(z) - logit(year_rate[&c.year])))
                    .collect();
                calibrate_intercept(c.treated_rate, &shifts, logit_sd)
            })
            .collect();
        let allocation = allocate(cfg.n_units, &cfg.cells.iter().map(|c| c.weight).collect::<Vec<_>>());
        Ok(Self { years, year_rate, team_z, alpha, logit_sd, allocation })
    }

    /// Expected treated share over the whole population.
    pub fn treated_share(&self, cfg: &ScmConfig) -> f64 {
        let w: f64 = cfg.cells.iter().map(|c| c.weight).sum();
        cfg.cells.iter().map(|c| c.weight * c.treated_rate).sum::<f64>() / w
    }
}

/// Intercept `a` with mean over teams of E[logistic(a + shift + sd X)] = rate.
fn calibrate_intercept(rate: f64, shifts: &[f64], sd: f64) -> f64 {
    let mut a = logit(rate);
    for _ in 0..100 {
        let (mut m, mut d) = (0.0, 0.0);
        for s in shifts {
            let (mi, di) = gaussian_logistic(a + s, sd);
            m += mi;
            d += di;
        }
        m /= shifts.len() as f64;
        d /= shifts.len() as f64;
        let step = (m - rate) / d;
        a -= step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    a
}

/// One simulated unit before assembly into a dataset row.
#[derive(Debug, Clone)]
struct Unit {
    cell: usize,
    team: usize,
    c_std: Vec<f64>,
    u: f64,
    prob: f64,
    treated: bool,
    y0: f64,
    y1: f64,
}

fn draw_unit<R: Rng>(cfg: &ScmConfig, pop: &Population, cell: usize, intercept: f64, rng: &mut R) -> Unit {
    let c = &cfg.cells[cell];
    let team = rng.gen_range(0..cfg.instrument.n_teams);
    let c_std: Vec<f64> = (0..cfg.confounders.len()).map(|_| rng.sample(StandardNormal)).collect();
    let u: f64 = rng.sample(StandardNormal);
    let z = pop.team_z[&c.year][team];
    let m = pop.year_rate[&c.year];
    let lin: f64 = pop.alpha[cell]
        + cfg.treatment.coefficients.iter().zip(&c_std).map(|(a, b)| a * b).sum::<f64>()
        + cfg.treatment.instrument_coef * (logit(z) - logit(m))
        + cfg.treatment.u_coef * u;
    let prob = logistic(lin);
    let treated = rng.gen::<f64>() < prob;
    let noise: f64 = rng.sample(StandardNormal);
    let o = &cfg.outcome;
    let y0 = intercept
        + o.coefficients.iter().zip(&c_std).map(|(a, b)| a * b).sum::<f64>()
        + o.u_strength * u
        + o.exclusion_violation * (z - m)
        + o.noise_sd * noise;
    let y1 = y0 + cfg.effect.tau(c.stand, &c_std);
    Unit { cell, team, c_std, u, prob, treated, y0, y1 }
}

/// Draw `n` units with the configured cell allocation scaled to `n`, in
/// parallel blocks with one random stream per block.
fn draw_units(cfg: &ScmConfig, pop: &Population, allocation: &[usize], label: &str, intercept: f64) -> Vec<Unit> {
    let cells: Vec<usize> = allocation.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat(c).take(k)).collect();
    cells
        .par_chunks(BLOCK)
        .enumerate()
        .flat_map_iter(|(b, chunk)| {
            let mut rng = stream(cfg.seed, label, b as u64);
            chunk.iter().map(|&c| draw_unit(cfg, pop, c, intercept, &mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEtt {
    pub value: f64,
    /// Monte Carlo standard error; 0 when the value is exact.
    pub mc_std_error: f64,
    pub exact: bool,
}

/// Population effect of treatment on the treated, E[tau(C) | T = 1].
///
/// Exact for constant and handedness-only effects (the latter through the
/// calibrated treated share of each cell). Otherwise a Monte Carlo average
/// of tau weighted by treatment probability, enlarged until its standard
/// error is at most 1e-3.
pub fn true_ett(cfg: &ScmConfig) -> Result<TrueEtt> {
    match &cfg.effect {
        EffectSpec::Constant { value } => Ok(TrueEtt { value: *value, mc_std_error: 0.0, exact: true }),
        EffectSpec::Handedness { .. } => {
            let (num, den) = cfg.cells.iter().fold((0.0, 0.0), |(a, b), c| {
                let t = c.weight * c.treated_rate;
                (a + t * cfg.effect.tau(c.stand, &[]), b + t)
            });
            Ok(TrueEtt { value: num / den, mc_std_error: 0.0, exact: true })
        }
        EffectSpec::Linear { .. } => {
            let pop = Population::new(cfg)?;
            let weights: Vec<f64> = cfg.cells.iter().map(|c| c.weight).collect();
            let mut n = 200_000;
            loop {
                let units = draw_units(cfg, &pop, &allocate(n, &weights), "scm/true_ett", 0.0);
                let taus: Vec<f64> = units.iter().map(|u| u.y1 - u.y0).collect();
                let sp: f64 = units.iter().map(|u| u.prob).sum();
                let r = units.iter().zip(&taus).map(|(u, t)| u.prob * t).sum::<f64>() / sp;
                let var: f64 = units.iter().zip(&taus).map(|(u, t)| (u.prob * (t - r)).powi(2)).sum();
                let se = var.sqrt() / sp;
                if se <= 1e-3 || n >= 20_000_000 {
                    return Ok(TrueEtt { value: r, mc_std_error: se, exact: false });
                }
                n *= 4;
            }
        }
    }
}

/// A simulated dataset together with what the analyst never sees.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScmConfig,
    pub dataset: AnalysisDataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub propensity: Vec<f64>,
    pub u: Vec<f64>,
    pub population: Population,
    pub outcome_intercept: f64,
}

impl Simulation {
    /// Realized individual effects averaged over treated rows.
    pub fn sample_ett(&self) -> f64 {
        let t = self.dataset.treatments();
        let d: Vec<f64> = (0..t.len()).filter(|&i| t[i]).map(|i| self.y1[i] - self.y0[i]).collect();
        mean(&d)
    }

    pub fn write_potential_outcomes(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "y0", "y1", "propensity", "u"])?;
        for i in 0..self.y0.len() {
            w.write_record([
                i.to_string(),
                crate::dataset::fmt_f64(self.y0[i]),
                crate::dataset::fmt_f64(self.y1[i]),
                crate::dataset::fmt_f64(self.propensity[i]),
                crate::dataset::fmt_f64(self.u[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn outcome_intercept(cfg: &ScmConfig, pop: &Population) -> Result<f64> {
    match cfg.outcome.intercept {
        Some(v) => Ok(v),
        None => Ok(-true_ett(cfg)?.value * pop.treated_share(cfg)),
    }
}

/// Draw a dataset from the structural model. The latent U is kept out of
/// the covariates; both potential outcomes are retained alongside.
pub fn generate(cfg: &ScmConfig) -> Result<Simulation> {
    let pop = Population::new(cfg)?;
    let intercept = outcome_intercept(cfg, &pop)?;
    let units = draw_units(cfg, &pop, &pop.allocation, "scm/units", intercept);
    let eps = cfg.positivity_eps;
    if let Some((i, u)) = units.iter().enumerate().find(|(_, u)| !(u.prob > eps && u.prob < 1.0 - eps)) {
        return Err(Error::PositivityViolation { unit: i, prob: u.prob, eps });
    }

    let mut team_year_n: BTreeMap<(i32, usize), usize> = BTreeMap::new();
    for u in &units {
        *team_year_n.entry((cfg.cells[u.cell].year, u.team)).or_default() += 1;
    }
    let mut local: BTreeMap<i32, usize> = BTreeMap::new();
    let rows: Vec<PlateAppearance> = units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let c = &cfg.cells[u.cell];
            let k = local.entry(c.year).or_default();
            let idx = *k;
            *k += 1;
            let z = pop.team_z[&c.year][u.team];
            let n_team = team_year_n[&(c.year, u.team)] as f64;
            PlateAppearance {
                key: PaKey {
                    game_year: c.year,
                    game_id: c.year as u64 * 100_000 + (idx / PA_PER_GAME) as u64,
                    at_bat_number: (idx % PA_PER_GAME) as u32 + 1,
                    batter_id: i as u64,
                    pitcher_id: 1_000_000 + i as u64,
                    fielding_team: format!("T{:02}", u.team + 1),
                },
                stand: c.stand,
                p_throws: c.p_throws,
                treated: u.treated,
                outcome: if u.treated { u.y1 } else { u.y0 },
                instrument: Instrument { rate: z, std_error: (z * (1.0 - z) / n_team).sqrt() },
                covariates: u
                    .c_std
                    .iter()
                    .zip(&cfg.confounders)
                    .map(|(s, spec)| spec.mean + spec.sd * s)
                    .collect(),
            }
        })
        .collect();
    let dataset = AnalysisDataset::new(cfg.confounders.iter().map(|c| c.name.clone()).collect(), rows)?;
    Ok(Simulation {
        config: cfg.clone(),
        dataset,
        y0: units.iter().map(|u| u.y0).collect(),
        y1: units.iter().map(|u| u.y1).collect(),
        propensity: units.iter().map(|u| u.prob).collect(),
        u: units.iter().map(|u| u.u).collect(),
        population: pop,
        outcome_intercept: intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingBias {
    /// Expected OLS coefficient on T minus the true ETT.
    pub bias: f64,
    pub mc_units: usize,
}

/// Bias of the regression of Y on T and the measured confounders (cell
/// indicators included) that the latent U and any direct instrument
/// effect induce.
///
/// Only the omitted part of the outcome, u_strength * U plus the direct
/// instrument term, is regressed on the design, so the estimate carries no
/// outcome noise; its Monte Carlo error comes from the U-T association alone.
pub fn confounding_bias(cfg: &ScmConfig, mc_units: usize) -> Result<ConfoundingBias> {
    let mc_cfg = ScmConfig { n_units: mc_units, outcome: super::config::OutcomeSpec { noise_sd: 0.0, ..cfg.outcome.clone() }, ..cfg.clone() };
    let sim = generate(&ScmConfig { seed: crate::rng::child_seed(cfg.seed, "scm/bias", 0), ..mc_cfg })?;
    let design = build_design(&sim.dataset, &DesignSpec::confounders(true));
    let t: Vec<f64> = sim.dataset.treatments().iter().map(|&b| f64::from(u8::from(b))).collect();
    let x = design.matrix.with_leading_column("treated", &t);
    let o = &cfg.outcome;
    let omitted: Vec<f64> = sim
        .dataset
        .rows
        .iter()
        .zip(&sim.u)
        .map(|(r, u)| o.u_strength * u + o.exclusion_violation * (r.instrument.rate - sim.population.year_rate[&r.key.game_year]))
        .collect();
    let fit = wls(&x, &omitted, None)?;
    Ok(ConfoundingBias { bias: fit.slopes[0], mc_units })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub year: i32,
    pub stand: Hand,
    /// `None` when pooled over pitcher hand.
    pub p_throws: Option<Hand>,
    pub n: usize,
    pub n_treated: usize,
    pub rate: f64,
    pub target_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMarginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub target_mean: f64,
    pub target_sd: f64,
}

/// Emitted marginals against the configured targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalsReport {
    pub n: usize,
    pub cells: Vec<GroupRate>,
    pub year_stand: Vec<GroupRate>,
    pub variables: Vec<VariableMarginal>,
    pub instrument_mean: f64,
    pub instrument_sd: f64,
}

impl MarginalsReport {
    pub fn max_rate_gap(&self) -> f64 {
        self.year_stand.iter().fold(0.0, |m, g| m.max((g.rate - g.target_rate).abs()))
    }
}

pub fn marginals(sim: &Simulation) -> MarginalsReport {
    let cfg = &sim.config;
    let ds = &sim.dataset;
    let mut cells = Vec::new();
    let mut by_ys: BTreeMap<(i32, Hand), (usize, usize, f64, f64)> = BTreeMap::new();
    for c in &cfg.cells {
        let (n, nt) = ds
            .rows
            .iter()
            .filter(|r| r.key.game_year == c.year && r.stand == c.stand && r.p_throws == c.p_throws)
            .fold((0, 0), |(n, t), r| (n + 1, t + usize::from(r.treated)));
        cells.push(GroupRate {
            year: c.year,
            stand: c.stand,
            p_throws: Some(c.p_throws),
            n,
            n_treated: nt,
            rate: nt as f64 / n as f64,
            target_rate: c.treated_rate,
        });
        let e = by_ys.entry((c.year, c.stand)).or_default();
        e.0 += n;
        e.1 += nt;
        e.2 += c.weight;
        e.3 += c.weight * c.treated_rate;
    }
    let year_stand = by_ys
        .into_iter()
        .map(|((year, stand), (n, nt, w, wr))| GroupRate {
            year,
            stand,
            p_throws: None,
            n,
            n_treated: nt,
            rate: nt as f64 / n as f64,
            target_rate: wr / w,
        })
        .collect();
    let y = ds.outcomes();
    let mut variables = vec![VariableMarginal {
        name: "delta_re".into(),
        mean: mean(&y),
        sd: sample_sd(&y),
        target_mean: 0.0,
        target_sd: super::config::OUTCOME_SD,
    }];
    for (j, spec) in cfg.confounders.iter().enumerate() {
        let col: Vec<f64> = ds.rows.iter().map(|r| r.covariates[j]).collect();
        variables.push(VariableMarginal {
            name: spec.name.clone(),
            mean: mean(&col),
            sd: sample_sd(&col),
            target_mean: spec.mean,
            target_sd: spec.sd,
        });
    }
    let z: Vec<f64> = ds.rows.iter().map(|r| r.instrument.rate).collect();
    MarginalsReport { n: ds.len(), cells, year_stand, variables, instrument_mean: mean(&z), instrument_sd: sample_sd(&z) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_is_exact_and_proportional() {
        let a = allocate(10, &[1.0, 1.0, 1.0]);
        assert_eq!(a.iter().sum::<usize>(), 10);
        assert_eq!(a, vec![4, 3, 3]);
    }

    #[test]
    fn calibrated_intercept_hits_rate() {
        let shifts = [-0.5, 0.0, 0.7];
        let a = calibrate_intercept(0.3, &shifts, 0.8);
        let m: f64 = shifts.iter().map(|s| gaussian_logistic(a + s, 0.8).0).sum::<f64>() / 3.0;
        assert!((m - 0.3).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = ScmConfig { n_units: 3000, seed: 4, ..ScmConfig::standard() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.y1, b.y1);
    }

    #[test]
    fn observed_outcome_is_the_realized_potential_outcome() {
        let s = generate(&ScmConfig { n_units: 2000, ..ScmConfig::standard() }).unwrap();
        for (i, r) in s.dataset.rows.iter().enumerate() {
            assert_eq!(r.outcome, if r.treated { s.y1[i] } else { s.y0[i] });
        }
    }

    #[test]
    fn tiny_epsilon_band_is_enforced() {
        let mut cfg = ScmConfig { n_units: 2000, positivity_eps: 0.2, ..ScmConfig::standard() };
        cfg.treatment.coefficients[2] = -3.0;
        assert!(matches!(generate(&cfg), Err(Error::PositivityViolation { .. })));
    }
}
