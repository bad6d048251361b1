use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisDataset;
use crate::design::{build_design, DesignSpec};
use crate::error::{Error, Result};
use crate::estimate::{EttEstimate, Method, Subgroup};
use crate::propensity::{LogisticOptions, LogisticProblem, PropensityModel};
use crate::stats::quantile;

use super::bootstrap::{bootstrap, BootstrapPlan, BootstrapResult, ResampleUnit, Resampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IptwMode {
    /// Control odds averaged over all rows and scaled by the treated share.
    #[default]
    Unnormalized,
    /// Control odds rescaled to sum to the treated count.
    Normalized,
}

impl IptwMode {
    pub fn label(self) -> &'static str {
        match self {
            IptwMode::Unnormalized => "odds weights, unnormalized plug-in",
            IptwMode::Normalized => "odds weights, normalized to treated count",
        }
    }
}

/// Controls with propensity at or above `1 - eps` are rejected.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Per-row IPTW weights: 1 for treated rows, the odds p/(1-p) for controls.
/// In normalized mode control weights are rescaled to sum to the treated count.
pub fn odds_weights(treated: &[bool], probs: &[f64], mode: IptwMode, eps: f64) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(probs.len());
    for (i, (&t, &p)) in treated.iter().zip(probs).enumerate() {
        if t {
            w.push(1.0);
        } else {
            if !(p > 0.0 && p < 1.0 - eps) {
                return Err(Error::DegenerateWeights { row: i, prob: p });
            }
            w.push(p / (1.0 - p));
        }
    }
    if mode == IptwMode::Normalized {
        let n_t = treated.iter().filter(|t| **t).count() as f64;
        let s: f64 = w.iter().zip(treated).filter(|(_, t)| !**t).map(|(w, _)| w).sum();
        for (w, t) in w.iter_mut().zip(treated) {
            if !t {
                *w *= n_t / s;
            }
        }
    }
    Ok(w)
}

/// Odds-weighted ETT point estimate.
///
/// Unnormalized: mean(y | T=1) - (1/P(T=1)) * mean((1-T) p/(1-p) y), with
/// P(T=1) the sample treated share. `counts` are frequency weights, used by
/// the bootstrap; `None` means every row once.
pub fn iptw_point(y: &[f64], treated: &[bool], probs: &[f64], counts: Option<&[f64]>, mode: IptwMode, eps: f64) -> Result<f64> {
    let (mut n_t, mut n_c, mut sum_ty, mut sum_odds, mut sum_odds_y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let c = counts.map_or(1.0, |c| c[i]);
        if c == 0.0 {
            continue;
        }
        if treated[i] {
            n_t += c;
            sum_ty += c * y[i];
        } else {
            let p = probs[i];
            if !(p > 0.0 && p < 1.0 - eps) {
                return Err(Error::DegenerateWeights { row: i, prob: p });
            }
            let odds = p / (1.0 - p);
            n_c += c;
            sum_odds += c * odds;
            sum_odds_y += c * odds * y[i];
        }
    }
    if n_t == 0.0 || n_c == 0.0 {
        return Err(Error::OneClass);
    }
    // (1/P) * (1/n) * S == S / n_t
    let control = match mode {
        IptwMode::Unnormalized => sum_odds_y / n_t,
        IptwMode::Normalized => sum_odds_y / sum_odds,
    };
    Ok(sum_ty / n_t - control)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IptwOptions {
    pub mode: IptwMode,
    pub eps: f64,
    pub logistic: LogisticOptions,
    pub bootstrap: BootstrapPlan,
    /// Gradient tolerance for the warm-started refits inside resamples.
    pub refit_gradient_tol: f64,
}

impl Default for IptwOptions {
    fn default() -> Self {
        Self {
            mode: IptwMode::Unnormalized,
            eps: DEFAULT_EPS,
            logistic: LogisticOptions::default(),
            bootstrap: BootstrapPlan::default(),
            refit_gradient_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IptwFit {
    pub estimate: EttEstimate,
    pub model: PropensityModel,
    /// Fitted probabilities for the rows of the subgroup, in dataset order.
    pub probabilities: Vec<f64>,
    pub bootstrap: BootstrapResult,
}

/// IPTW estimate of the ETT for one subgroup, with bootstrap SE and
/// percentile interval.
pub fn ett_iptw(ds: &AnalysisDataset, subgroup: Subgroup, opts: &IptwOptions) -> Result<IptwFit> {
    let sub = subgroup.select(ds);
    if sub.is_empty() {
        return Err(Error::EmptyInput(format!("subgroup {subgroup} has no rows")));
    }
    let design = build_design(&sub, &DesignSpec::confounders(subgroup.is_pooled()));
    let treated = sub.treatments();
    let y = sub.outcomes();
    let problem = LogisticProblem::new(&design, &treated)?;
    let full = problem.fit(None, None, &opts.logistic)?;
    let probs = problem.probabilities(&full.beta);
    let estimate = iptw_point(&y, &treated, &probs, None, opts.mode, opts.eps)?;

    let resampler = match opts.bootstrap.unit {
        ResampleUnit::Row => Resampler::rows(sub.len()),
        ResampleUnit::Game => Resampler::clustered(&sub.rows.iter().map(|r| r.key.game_id).collect::<Vec<_>>()),
    };
    let refit_opts = LogisticOptions { gradient_tol: opts.refit_gradient_tol, ..opts.logistic };
    let label = format!("iptw/{subgroup}");
    let boot = bootstrap(&resampler, &opts.bootstrap, &label, |counts| {
        let p = if opts.bootstrap.refit {
            let fit = problem.fit(Some(counts), Some(&full.beta), &refit_opts)?;
            problem.probabilities(&fit.beta)
        } else {
            probs.clone()
        };
        iptw_point(&y, &treated, &p, Some(counts), opts.mode, opts.eps)
    })?;

    let n_t = sub.n_treated();
    let weights = odds_weights(&treated, &probs, opts.mode, opts.eps)?;
    let max_w = weights.iter().zip(&treated).filter(|(_, t)| !**t).fold(0.0f64, |m, (w, _)| m.max(*w));
    let est = EttEstimate::new(Method::Iptw, subgroup, estimate, boot.std_error, (boot.lower, boot.upper), n_t, sub.len() - n_t)?
        .with_diagnostic("weighting", opts.mode.label())
        .with_diagnostic("bootstrap_replicates", boot.replicates.len())
        .with_diagnostic("bootstrap_skipped", boot.skipped.len())
        .with_diagnostic("bootstrap_refit", opts.bootstrap.refit)
        .with_diagnostic("resample_unit", opts.bootstrap.unit)
        .with_diagnostic("max_control_weight", max_w)
        .with_diagnostic("propensity_iterations", full.report.iterations);
    Ok(IptwFit { estimate: est, model: problem.to_model(&full), probabilities: probs, bootstrap: boot })
}

/// Rows kept when dropping probabilities above the `percentile`-th
/// percentile, and that threshold.
pub fn trim_mask(probs: &[f64], percentile: f64) -> (f64, Vec<bool>) {
    let threshold = quantile(probs, percentile / 100.0);
    (threshold, probs.iter().map(|&p| p <= threshold).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrimComparison {
    pub subgroup: Subgroup,
    pub percentile: f64,
    pub threshold: f64,
    pub n_dropped: usize,
    pub full: EttEstimate,
    pub trimmed: EttEstimate,
}

/// Re-run IPTW after dropping the subgroup's rows whose fitted propensity
/// is above the given percentile; the propensity model is refit on the
/// retained rows.
pub fn trim_sensitivity(ds: &AnalysisDataset, subgroup: Subgroup, opts: &IptwOptions, percentile: f64) -> Result<TrimComparison> {
    let full = ett_iptw(ds, subgroup, opts)?;
    trim_against(&full, ds, subgroup, opts, percentile)
}

/// As [`trim_sensitivity`], reusing an existing fit on the full subgroup.
pub fn trim_against(full: &IptwFit, ds: &AnalysisDataset, subgroup: Subgroup, opts: &IptwOptions, percentile: f64) -> Result<TrimComparison> {
    let sub = subgroup.select(ds);
    let (threshold, keep) = trim_mask(&full.probabilities, percentile);
    let rows: Vec<usize> = (0..sub.len()).filter(|&i| keep[i]).collect();
    let retained = sub.subset(&rows);
    let trimmed = ett_iptw(&retained, subgroup, opts)?;
    Ok(TrimComparison {
        subgroup,
        percentile,
        threshold,
        n_dropped: sub.len() - rows.len(),
        full: full.estimate.clone(),
        trimmed: trimmed.estimate,
    })
}

/// Side-by-side table: one row per (dataset, subgroup).
pub fn write_trim_table(rows: &[TrimComparison], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "subgroup", "estimate", "lower", "upper", "n_treated", "n_control"])?;
    for r in rows {
        let label = format!("top {}% removed", 100.0 - r.percentile);
        for (name, e) in [("original", &r.full), (label.as_str(), &r.trimmed)] {
            w.write_record([
                name.to_owned(),
                r.subgroup.to_string(),
                crate::dataset::fmt_f64(e.estimate),
                crate::dataset::fmt_f64(e.lower),
                crate::dataset::fmt_f64(e.upper),
                e.n_treated.to_string(),
                e.n_control.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
