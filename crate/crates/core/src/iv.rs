//! Instrumental-variable ETT: per-year two-stage least squares combined by
//! treated counts, first-stage strength and instrument association checks.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dataset::AnalysisDataset;
use crate::design::{build_design, CovariateSelection, DesignSpec};
use crate::error::{Error, Result};
use crate::estimate::{EttEstimate, Method, Subgroup};
use crate::linalg::{tss, wls, RowMatrix};
use crate::stats::{mean, quantile, quantile_sorted, sample_sd};
use crate::weighting::{bootstrap, BootstrapPlan, BootstrapResult, ResampleUnit, Resampler};

pub const INSTRUMENT_COLUMN: &str = "team_shift_rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvSpec {
    /// Conditioning covariates, default the pitcher block.
    pub covariates: CovariateSelection,
    /// Condition on pitcher handedness as well.
    pub p_throws: bool,
    /// Partial F below this marks a stratum weak.
    pub weak_f_floor: f64,
    pub bootstrap: BootstrapPlan,
}

impl Default for IvSpec {
    fn default() -> Self {
        Self {
            covariates: CovariateSelection::Prefix("pitcher_".into()),
            p_throws: true,
            weak_f_floor: 10.0,
            bootstrap: BootstrapPlan { refit: false, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    /// T regressed on the instrument alone.
    pub f: f64,
    /// Instrument added to T regressed on the conditioning covariates.
    pub partial_f: f64,
    pub df_residual: f64,
    /// Instrument explains T without residual.
    pub perfect: bool,
}

fn positive_rows(n: usize, w: Option<&[f64]>) -> f64 {
    w.map_or(n as f64, |w| w.iter().sum())
}

/// First-stage F statistics for instrument `z` against treatment `t`.
/// Weights are frequency weights.
pub fn first_stage_f(t: &[f64], z: &[f64], x: &RowMatrix, weights: Option<&[f64]>) -> Result<FirstStage> {
    let n = positive_rows(t.len(), weights);
    let k = x.ncols() + 1;
    if !(n > (k + 2) as f64) {
        return Err(Error::EmptyInput(format!("{n} rows for a first stage with {k} regressors")));
    }
    let total = tss(t, weights);
    let zonly = RowMatrix::from_columns(vec![INSTRUMENT_COLUMN.into()], &[z.to_vec()]);
    let ssr_z = wls(&zonly, t, weights)?.ssr(weights);
    let ssr_r = if x.ncols() == 0 { total } else { wls(x, t, weights)?.ssr(weights) };
    let ssr_u = wls(&x.with_leading_column(INSTRUMENT_COLUMN, z), t, weights)?.ssr(weights);
    let perfect = ssr_u <= 1e-14 * total;
    let df_z = n - 2.0;
    let df_u = n - k as f64 - 1.0;
    let f = if perfect { f64::INFINITY } else { (total - ssr_z) / (ssr_z / df_z) };
    let partial_f = if perfect { f64::INFINITY } else { (ssr_r - ssr_u) / (ssr_u / df_u) };
    Ok(FirstStage { f, partial_f, df_residual: df_u, perfect })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub year: i32,
    pub estimate: f64,
    /// HC1 standard error of the second-stage coefficient.
    pub std_error: f64,
    pub first_stage: FirstStage,
    pub weak: bool,
    pub n: usize,
    pub n_treated: usize,
    /// Share of treated units, filled in when strata are combined.
    pub weight: f64,
}

fn has_variation(v: &[f64], w: Option<&[f64]>) -> bool {
    let mut first = None;
    for (i, x) in v.iter().enumerate() {
        if w.map_or(1.0, |w| w[i]) > 0.0 {
            match first {
                None => first = Some(*x),
                Some(f) if f != *x => return true,
                _ => {}
            }
        }
    }
    false
}

/// 2SLS within one stratum: T on (Z, X), then y on (fitted T, X).
pub fn tsls_stratum(
    year: i32,
    y: &[f64],
    t: &[f64],
    z: &[f64],
    x: &RowMatrix,
    weights: Option<&[f64]>,
    weak_f_floor: f64,
) -> Result<StratumEstimate> {
    if !has_variation(t, weights) || !has_variation(z, weights) {
        return Err(Error::NoVariation(year.to_string()));
    }
    let first_stage = first_stage_f(t, z, x, weights)?;
    let stage1 = wls(&x.with_leading_column(INSTRUMENT_COLUMN, z), t, weights)?;
    let x2 = x.with_leading_column("treated_hat", &stage1.fitted);
    let stage2 = wls(&x2, y, weights)?;
    let beta = stage2.slopes[0];
    // Structural residuals use the observed treatment.
    let resid: Vec<f64> = (0..y.len())
        .map(|i| {
            let rest: f64 = x2.row(i)[1..].iter().zip(&stage2.slopes[1..]).map(|(a, b)| a * b).sum();
            y[i] - stage2.intercept - beta * t[i] - rest
        })
        .collect();
    let se = stage2.hc1_with(&x2, weights, &resid)[(0, 0)].max(0.0).sqrt();
    let n_treated = (0..t.len())
        .map(|i| if t[i] > 0.5 { weights.map_or(1.0, |w| w[i]) } else { 0.0 })
        .sum::<f64>() as usize;
    Ok(StratumEstimate {
        year,
        estimate: beta,
        std_error: se,
        weak: first_stage.partial_f < weak_f_floor,
        first_stage,
        n: positive_rows(t.len(), weights) as usize,
        n_treated,
        weight: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnusableStratum {
    pub year: i32,
    pub reason: String,
}

/// Rows and regressors of one year, prepared once and reused across
/// bootstrap replicates.
struct Stratum {
    year: i32,
    rows: Vec<usize>,
    y: Vec<f64>,
    t: Vec<f64>,
    z: Vec<f64>,
    x: RowMatrix,
}

fn strata(sub: &AnalysisDataset, spec: &IvSpec, pooled: bool) -> Vec<Stratum> {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, r) in sub.rows.iter().enumerate() {
        by_year.entry(r.key.game_year).or_default().push(i);
    }
    let design_spec = DesignSpec { covariates: spec.covariates.clone(), p_throws: spec.p_throws, stand: pooled, year_indicators: false };
    by_year
        .into_iter()
        .map(|(year, rows)| {
            let part = sub.subset(&rows);
            Stratum {
                year,
                y: part.outcomes(),
                t: part.rows.iter().map(|r| f64::from(u8::from(r.treated))).collect(),
                z: part.rows.iter().map(|r| r.instrument.rate).collect(),
                x: build_design(&part, &design_spec).matrix,
                rows,
            }
        })
        .collect()
}

/// Estimate every stratum and combine by treated counts. Strata without
/// treatment or instrument variation are set aside; strata with no treated
/// units get weight 0.
fn combine(
    strata: &[Stratum],
    counts: Option<&[f64]>,
    floor: f64,
) -> Result<(f64, Vec<StratumEstimate>, Vec<UnusableStratum>)> {
    let results: Vec<Result<StratumEstimate>> = strata
        .par_iter()
        .map(|s| {
            let w: Option<Vec<f64>> = counts.map(|c| s.rows.iter().map(|&i| c[i]).collect());
            tsls_stratum(s.year, &s.y, &s.t, &s.z, &s.x, w.as_deref(), floor)
        })
        .collect();
    let mut used = Vec::new();
    let mut unusable = Vec::new();
    for (s, r) in strata.iter().zip(results) {
        match r {
            Ok(e) => used.push(e),
            Err(Error::NoVariation(_)) => unusable.push(UnusableStratum { year: s.year, reason: "no treatment or instrument variation".into() }),
            Err(e) => return Err(e.context(format!("stratum {}", s.year))),
        }
    }
    let total: usize = used.iter().map(|e| e.n_treated).sum();
    if used.is_empty() || total == 0 {
        return Err(Error::AllStrataUnusable);
    }
    let mut est = 0.0;
    for e in &mut used {
        e.weight = e.n_treated as f64 / total as f64;
        est += e.weight * e.estimate;
    }
    Ok((est, used, unusable))
}

#[derive(Debug, Clone)]
pub struct IvFit {
    pub estimate: EttEstimate,
    pub strata: Vec<StratumEstimate>,
    pub unusable: Vec<UnusableStratum>,
    /// First stage over the whole subgroup, conditioning on year as well.
    pub first_stage: FirstStage,
    pub bootstrap: BootstrapResult,
}

impl IvFit {
    pub fn write_strata_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subgroup", "year", "estimate", "std_error", "partial_f", "weight", "n", "n_treated", "weak"])?;
        for s in &self.strata {
            w.write_record([
                self.estimate.subgroup.to_string(),
                s.year.to_string(),
                crate::dataset::fmt_f64(s.estimate),
                crate::dataset::fmt_f64(s.std_error),
                crate::dataset::fmt_f64(s.first_stage.partial_f),
                crate::dataset::fmt_f64(s.weight),
                s.n.to_string(),
                s.n_treated.to_string(),
                s.weak.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Year-stratified 2SLS estimate of the ETT with a bootstrap interval. The
/// bootstrap resamples rows of the subgroup and re-runs the stratified
/// estimator on each resample.
pub fn ett_iv(ds: &AnalysisDataset, subgroup: Subgroup, spec: &IvSpec) -> Result<IvFit> {
    let sub = subgroup.select(ds);
    if sub.is_empty() {
        return Err(Error::EmptyInput(format!("subgroup {subgroup} has no rows")));
    }
    let st = strata(&sub, spec, subgroup.is_pooled());
    let (estimate, used, unusable) = combine(&st, None, spec.weak_f_floor)?;

    let pooled_x = build_design(
        &sub,
        &DesignSpec { covariates: spec.covariates.clone(), p_throws: spec.p_throws, stand: subgroup.is_pooled(), year_indicators: true },
    )
    .matrix;
    let t_all: Vec<f64> = sub.rows.iter().map(|r| f64::from(u8::from(r.treated))).collect();
    let z_all: Vec<f64> = sub.rows.iter().map(|r| r.instrument.rate).collect();
    let first_stage = first_stage_f(&t_all, &z_all, &pooled_x, None)?;

    let resampler = match spec.bootstrap.unit {
        ResampleUnit::Row => Resampler::rows(sub.len()),
        ResampleUnit::Game => Resampler::clustered(&sub.rows.iter().map(|r| r.key.game_id).collect::<Vec<_>>()),
    };
    let label = format!("iv/{subgroup}");
    let boot = bootstrap(&resampler, &spec.bootstrap, &label, |c| match combine(&st, Some(c), spec.weak_f_floor) {
        Ok((e, _, _)) => Ok(e),
        Err(Error::AllStrataUnusable) => Err(Error::ResampleDegenerate),
        Err(e) => Err(e),
    })?;

    let n_t = sub.n_treated();
    let est = EttEstimate::new(Method::Iv, subgroup, estimate, boot.std_error, (boot.lower, boot.upper), n_t, sub.len() - n_t)?
        .with_diagnostic("first_stage_f", first_stage.f)
        .with_diagnostic("first_stage_partial_f", first_stage.partial_f)
        .with_diagnostic("weak_strata", used.iter().filter(|s| s.weak).map(|s| s.year).collect::<Vec<_>>())
        .with_diagnostic("unusable_strata", &unusable)
        .with_diagnostic("conditioning_set", pooled_x.names.iter().filter(|n| !n.starts_with("year_")).collect::<Vec<_>>())
        .with_diagnostic("strata_weighting", "treated count share")
        .with_diagnostic("bootstrap_replicates", boot.replicates.len())
        .with_diagnostic("bootstrap_skipped", boot.skipped.len())
        .with_diagnostic("resample_unit", spec.bootstrap.unit);
    Ok(IvFit { estimate: est, strata: used, unusable, first_stage, bootstrap: boot })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateAssociation {
    pub name: String,
    pub levels: Vec<LevelSummary>,
    /// One-way ANOVA F across instrument levels.
    pub f_stat: f64,
    pub p_value: f64,
    /// Between-level share of variance.
    pub eta_squared: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentReport {
    /// Instrument values splitting low/medium and medium/high.
    pub cuts: (f64, f64),
    pub threshold: f64,
    pub covariates: Vec<CovariateAssociation>,
}

impl InstrumentReport {
    pub fn flagged(&self) -> Vec<&str> {
        self.covariates.iter().filter(|c| c.flagged).map(|c| c.name.as_str()).collect()
    }
}

pub const INSTRUMENT_LEVELS: [&str; 3] = ["low", "medium", "high"];

/// One-way ANOVA of `values` across `groups` (labels 0..k). Returns
/// (F, p-value, eta squared); empty groups are ignored.
pub fn one_way_anova(values: &[f64], groups: &[usize], k: usize) -> (f64, f64, f64) {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (v, &g) in values.iter().zip(groups) {
        sums[g] += v;
        counts[g] += 1;
    }
    let grand = mean(values);
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let ssb: f64 = (0..k).filter(|&g| counts[g] > 0).map(|g| counts[g] as f64 * (means[g] - grand).powi(2)).sum();
    let ssw: f64 = values.iter().zip(groups).map(|(v, &g)| (v - means[g]).powi(2)).sum();
    let k_used = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = values.len() as f64;
    let (d1, d2) = (k_used - 1.0, n - k_used);
    let f = (ssb / d1) / (ssw / d2);
    let p = match FisherSnedecor::new(d1, d2) {
        Ok(dist) if f.is_finite() => dist.sf(f),
        _ => f64::NAN,
    };
    let total = ssb + ssw;
    let eta = if total > 0.0 { ssb / total } else { 0.0 };
    (f, p, eta)
}

/// Bin the instrument into tertiles and report how each covariate's
/// distribution varies across them. A covariate is flagged when its
/// between-level variance share exceeds `threshold`.
pub fn instrument_diagnostics(z: &[f64], covariates: &RowMatrix, threshold: f64) -> InstrumentReport {
    let c1 = quantile(z, 1.0 / 3.0);
    let c2 = quantile(z, 2.0 / 3.0);
    let groups: Vec<usize> = z.iter().map(|&v| if v <= c1 { 0 } else if v <= c2 { 1 } else { 2 }).collect();
    let columns = (0..covariates.ncols())
        .map(|j| {
            let col = covariates.column(j);
            let levels = (0..3)
                .map(|g| {
                    let mut v: Vec<f64> = col.iter().zip(&groups).filter(|(_, &h)| h == g).map(|(x, _)| *x).collect();
                    v.sort_by(f64::total_cmp);
                    let q = |p| if v.is_empty() { f64::NAN } else { quantile_sorted(&v, p) };
                    LevelSummary {
                        level: INSTRUMENT_LEVELS[g].into(),
                        n: v.len(),
                        mean: if v.is_empty() { f64::NAN } else { mean(&v) },
                        sd: sample_sd(&v),
                        q25: q(0.25),
                        median: q(0.5),
                        q75: q(0.75),
                    }
                })
                .collect();
            let (f_stat, p_value, eta_squared) = one_way_anova(&col, &groups, 3);
            CovariateAssociation {
                name: covariates.names[j].clone(),
                levels,
                f_stat,
                p_value,
                eta_squared,
                flagged: eta_squared > threshold,
            }
        })
        .collect();
    InstrumentReport { cuts: (c1, c2), threshold, covariates: columns }
}
