//! Logistic propensity model fitted by IRLS.
//!
//! Continuous columns are standardized before fitting and the coefficients
//! are mapped back to the raw scale afterwards. [`LogisticProblem`] keeps the
//! standardized design around so bootstrap refits can reuse it with
//! frequency weights and a warm start.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{ColumnKind, Design};
use crate::error::{Error, Result};
use crate::linalg::{checked_cholesky, COLLINEARITY_TOL};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Stop when max |score| / (sum of weights) falls below this.
    pub gradient_tol: f64,
    /// Optional L2 penalty on the standardized slopes (0 disables).
    pub ridge: f64,
    /// Max |standardized coefficient| treated as divergence.
    pub separation_threshold: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { max_iter: 100, gradient_tol: 1e-12, ridge: 0.0, separation_threshold: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub step_halvings: usize,
    /// Max |score| / n on the standardized scale at the returned coefficients.
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    /// Intercept first, then one raw-scale coefficient per manifest column.
    pub coefficients: Vec<f64>,
    pub manifest: Vec<ManifestColumn>,
    pub terms: String,
    pub convergence: ConvergenceReport,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl PropensityModel {
    pub fn linear_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.manifest.len() {
            return Err(Error::ManifestMismatch { expected: self.manifest.len(), got: x.len() });
        }
        Ok(self.coefficients[0] + x.iter().zip(&self.coefficients[1..]).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn prob_score(&self, x: &[f64]) -> Result<f64> {
        self.linear_score(x).map(logistic)
    }

    pub fn linear_scores(&self, design: &Design) -> Result<Vec<f64>> {
        (0..design.matrix.nrows).map(|i| self.linear_score(design.matrix.row(i))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.coefficients.len() != m.manifest.len() + 1 {
            return Err(Error::ManifestMismatch { expected: m.manifest.len() + 1, got: m.coefficients.len() });
        }
        Ok(m)
    }
}

/// Standardized design with a leading intercept column, ready for IRLS.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    centers: Vec<f64>,
    scales: Vec<f64>,
    /// Row-major, width `p`, column 0 is the intercept.
    x: Vec<f64>,
    t: Vec<f64>,
    n: usize,
    p: usize,
}

/// Coefficients on the standardized scale plus their report.
#[derive(Debug, Clone)]
pub struct StandardizedFit {
    pub beta: Vec<f64>,
    pub report: ConvergenceReport,
}

impl LogisticProblem {
    pub fn new(design: &Design, treated: &[bool]) -> Result<Self> {
        let m = &design.matrix;
        let n = m.nrows;
        let k = m.ncols();
        assert_eq!(treated.len(), n);
        if n < k + 1 {
            return Err(Error::EmptyInput(format!("{n} rows for {} coefficients", k + 1)));
        }
        let n_t = treated.iter().filter(|t| **t).count();
        if n_t == 0 || n_t == n {
            return Err(Error::OneClass);
        }
        let mut centers = vec![0.0; k];
        let mut scales = vec![1.0; k];
        for j in 0..k {
            if design.kinds[j] == ColumnKind::Continuous {
                let col = m.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                if var <= 0.0 {
                    return Err(Error::SingularDesign(m.names[j].clone()));
                }
                centers[j] = mean;
                scales[j] = var.sqrt();
            }
        }
        let p = k + 1;
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.push(1.0);
            for (j, v) in m.row(i).iter().enumerate() {
                x.push((v - centers[j]) / scales[j]);
            }
        }
        let mut names = vec!["(intercept)".to_owned()];
        names.extend(m.names.iter().cloned());
        let problem = Self {
            names,
            kinds: design.kinds.clone(),
            centers,
            scales,
            x,
            t: treated.iter().map(|&b| f64::from(u8::from(b))).collect(),
            n,
            p,
        };
        problem.check_collinearity()?;
        Ok(problem)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    fn check_collinearity(&self) -> Result<()> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for row in self.x.chunks_exact(p) {
            accumulate_upper(&mut g, row, 1.0, p);
        }
        checked_cholesky(&symmetric(&g, p), &self.names, COLLINEARITY_TOL)?;
        Ok(())
    }

    /// One pass: log-likelihood, score and (upper-triangle) information.
    fn evaluate(&self, beta: &[f64], weights: Option<&[f64]>, info: Option<&mut [f64]>) -> (f64, Vec<f64>) {
        let p = self.p;
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = info;
        if let Some(h) = info.as_deref_mut() {
            h.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, row) in self.x.chunks_exact(p).enumerate() {
            let fw = weights.map_or(1.0, |w| w[i]);
            if fw == 0.0 {
                continue;
            }
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let e = (-eta.abs()).exp();
            let mu = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            let t = self.t[i];
            // log(1 + e^{-|eta|}) + max(0, -eta) = -log mu, etc.
            let soft = e.ln_1p();
            ll -= fw * if t > 0.5 { soft + (-eta).max(0.0) } else { soft + eta.max(0.0) };
            let r = fw * (t - mu);
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
            if let Some(h) = info.as_deref_mut() {
                accumulate_upper(h, row, fw * mu * (1.0 - mu), p);
            }
        }
        (ll, grad)
    }

    /// Fit on the standardized scale. `weights` are frequency weights (e.g.
    /// bootstrap resample counts); `start` is a warm start.
    pub fn fit(&self, weights: Option<&[f64]>, start: Option<&[f64]>, opts: &LogisticOptions) -> Result<StandardizedFit> {
        let p = self.p;
        let total_w: f64 = weights.map_or(self.n as f64, |w| w.iter().sum());
        let treated_w: f64 = match weights {
            None => self.t.iter().sum(),
            Some(w) => w.iter().zip(&self.t).map(|(w, t)| w * t).sum(),
        };
        if treated_w <= 0.0 || treated_w >= total_w {
            return Err(Error::OneClass);
        }
        let mut beta = match start {
            Some(s) => s.to_vec(),
            None => {
                let mut b = vec![0.0; p];
                let rate = treated_w / total_w;
                b[0] = (rate / (1.0 - rate)).ln();
                b
            }
        };
        let penalized = |ll: f64, beta: &[f64]| ll - 0.5 * opts.ridge * beta[1..].iter().map(|b| b * b).sum::<f64>();

        let mut info = vec![0.0; p * p];
        let (mut ll, mut grad) = self.evaluate(&beta, weights, Some(&mut info));
        let mut halvings = 0;
        for iter in 0..opts.max_iter {
            for j in 1..p {
                grad[j] -= opts.ridge * beta[j];
            }
            let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / total_w;
            if gnorm < opts.gradient_tol {
                return Ok(StandardizedFit {
                    beta,
                    report: ConvergenceReport { iterations: iter, step_halvings: halvings, gradient_norm: gnorm, log_likelihood: ll },
                });
            }
            let mut h = symmetric(&info, p);
            for j in 1..p {
                h[(j, j)] += opts.ridge;
            }
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&DVector::from_vec(grad.clone())),
                None => {
                    checked_cholesky(&h, &self.names, COLLINEARITY_TOL)?;
                    return Err(Error::SingularDesign(self.names[p - 1].clone()));
                }
            };
            let base = penalized(ll, &beta);
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + scale * d).collect();
                let (ll_t, grad_t) = self.evaluate(&trial, weights, Some(&mut info));
                if penalized(ll_t, &trial) >= base - 1e-12 * (1.0 + base.abs()) || scale < 1e-9 {
                    beta = trial;
                    ll = ll_t;
                    grad = grad_t;
                    break;
                }
                scale *= 0.5;
                halvings += 1;
            }
            let max_coef = beta[1..].iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if max_coef > opts.separation_threshold || !beta.iter().all(|b| b.is_finite()) {
                return Err(Error::Separation(max_coef));
            }
        }
        Err(Error::NoConvergence(opts.max_iter))
    }

    /// Probabilities for every row under standardized coefficients.
    pub fn probabilities(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .chunks_exact(self.p)
            .map(|row| logistic(row.iter().zip(beta).map(|(a, b)| a * b).sum()))
            .collect()
    }

    pub fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        self.x.chunks_exact(self.p).map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn to_model(&self, fit: &StandardizedFit) -> PropensityModel {
        let mut coefficients = vec![0.0; self.p];
        let mut intercept = fit.beta[0];
        for j in 0..self.p - 1 {
            let b = fit.beta[j + 1] / self.scales[j];
            coefficients[j + 1] = b;
            intercept -= b * self.centers[j];
        }
        coefficients[0] = intercept;
        PropensityModel {
            coefficients,
            manifest: self.names[1..]
                .iter()
                .zip(&self.kinds)
                .map(|(name, kind)| ManifestColumn { name: name.clone(), kind: *kind })
                .collect(),
            terms: "main effects".into(),
            convergence: fit.report.clone(),
        }
    }
}

fn accumulate_upper(h: &mut [f64], row: &[f64], w: f64, p: usize) {
    for a in 0..p {
        let wa = w * row[a];
        let dst = &mut h[a * p + a..a * p + p];
        for (d, xb) in dst.iter_mut().zip(&row[a..]) {
            *d += wa * xb;
        }
    }
}

fn symmetric(upper: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i <= j { upper[i * p + j] } else { upper[j * p + i] })
}

pub fn fit_logistic(design: &Design, treated: &[bool]) -> Result<PropensityModel> {
    fit_logistic_with(design, treated, &LogisticOptions::default())
}

pub fn fit_logistic_with(design: &Design, treated: &[bool], opts: &LogisticOptions) -> Result<PropensityModel> {
    let problem = LogisticProblem::new(design, treated)?;
    let fit = problem.fit(None, None, opts)?;
    Ok(problem.to_model(&fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOverlap {
    pub n: usize,
    /// (level, score) pairs at 0, 5, 25, 50, 75, 95 and 100 percent.
    pub quantiles: Vec<(f64, f64)>,
    pub outside_support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearOverlap {
    pub year: i32,
    pub treated: GroupOverlap,
    pub control: GroupOverlap,
    /// Common support: [max of group minima, min of group maxima].
    pub support: (f64, f64),
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub flag_fraction: f64,
    pub years: Vec<YearOverlap>,
}

const OVERLAP_LEVELS: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

/// Per-year overlap of treated and control scores. A year is flagged when
/// either group has more than `flag_fraction` of its units outside the
/// common support, or when one group is absent.
pub fn positivity_report(scores: &[f64], treated: &[bool], years: &[i32], flag_fraction: f64) -> PositivityReport {
    let mut by_year: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((s, t), y) in scores.iter().zip(treated).zip(years) {
        let e = by_year.entry(*y).or_default();
        if *t {
            e.0.push(*s);
        } else {
            e.1.push(*s);
        }
    }
    let years = by_year
        .into_iter()
        .map(|(year, (mut ts, mut cs))| {
            ts.sort_by(f64::total_cmp);
            cs.sort_by(f64::total_cmp);
            let support = match (ts.first(), ts.last(), cs.first(), cs.last()) {
                (Some(t0), Some(t1), Some(c0), Some(c1)) => (t0.max(*c0), t1.min(*c1)),
                _ => (f64::NAN, f64::NAN),
            };
            let summarize = |v: &[f64]| GroupOverlap {
                n: v.len(),
                quantiles: OVERLAP_LEVELS.iter().map(|&q| (q, quantile_sorted(v, q))).collect(),
                outside_support: v.iter().filter(|s| !(**s >= support.0 && **s <= support.1)).count(),
            };
            let treated = summarize(&ts);
            let control = summarize(&cs);
            let frac = |g: &GroupOverlap| if g.n == 0 { 1.0 } else { g.outside_support as f64 / g.n as f64 };
            let flagged = ts.is_empty() || cs.is_empty() || frac(&treated) > flag_fraction || frac(&control) > flag_fraction;
            YearOverlap { year, treated, control, support, flagged }
        })
        .collect();
    PositivityReport { flag_fraction, years }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RowMatrix;

    fn design(cols: &[(&str, Vec<f64>)]) -> Design {
        let names = cols.iter().map(|(n, _)| n.to_string()).collect();
        let columns: Vec<Vec<f64>> = cols.iter().map(|(_, c)| c.clone()).collect();
        Design { matrix: RowMatrix::from_columns(names, &columns), kinds: vec![ColumnKind::Continuous; cols.len()] }
    }

    #[test]
    fn intercept_only_half_treated_is_zero() {
        let d = Design { matrix: RowMatrix::empty(10), kinds: vec![] };
        let t: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let m = fit_logistic(&d, &t).unwrap();
        assert!(m.coefficients[0].abs() < 1e-12);
        assert_eq!(m.coefficients.len(), 1);
    }

    #[test]
    fn one_class_is_rejected() {
        let d = design(&[("x", (0..10).map(f64::from).collect())]);
        assert!(matches!(fit_logistic(&d, &[true; 10]), Err(Error::OneClass)));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64).collect();
        let d = design(&[("x", x.clone()), ("x_dup", x)]);
        let t: Vec<bool> = (0..30).map(|i| (i * 7) % 3 == 0).collect();
        match fit_logistic(&d, &t) {
            Err(Error::SingularDesign(name)) => assert_eq!(name, "x_dup"),
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn perfect_separation_is_detected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let t: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert!(matches!(fit_logistic(&design(&[("x", x)]), &t), Err(Error::Separation(_))));
    }

    #[test]
    fn ridge_tames_separation() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let t: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let opts = LogisticOptions { ridge: 1.0, ..Default::default() };
        assert!(fit_logistic_with(&design(&[("x", x)]), &t, &opts).is_ok());
    }

    #[test]
    fn zero_model_scores() {
        let m = PropensityModel {
            coefficients: vec![0.0, 0.0],
            manifest: vec![ManifestColumn { name: "x".into(), kind: ColumnKind::Continuous }],
            terms: "main effects".into(),
            convergence: ConvergenceReport { iterations: 0, step_halvings: 0, gradient_norm: 0.0, log_likelihood: 0.0 },
        };
        assert_eq!(m.linear_score(&[3.0]).unwrap(), 0.0);
        assert_eq!(m.prob_score(&[3.0]).unwrap(), 0.5);
        assert!(matches!(m.linear_score(&[1.0, 2.0]), Err(Error::ManifestMismatch { .. })));
        let back = PropensityModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn logistic_is_symmetric() {
        for a in [0.1, 1.0, 7.5, 40.0] {
            assert!((logistic(a) + logistic(-a) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_scores_have_full_overlap() {
        let s = vec![0.3; 40];
        let t: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let y: Vec<i32> = (0..40).map(|i| 2015 + i / 20).collect();
        let r = positivity_report(&s, &t, &y, 0.01);
        assert_eq!(r.years.len(), 2);
        assert!(r.years.iter().all(|y| y.treated.outside_support == 0 && y.control.outside_support == 0 && !y.flagged));
    }
}
