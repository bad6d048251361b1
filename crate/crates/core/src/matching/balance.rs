use serde::{Deserialize, Serialize};

use crate::linalg::RowMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub name: String,
    pub smd_before: f64,
    pub smd_after: f64,
    pub ecdf_mean_before: f64,
    pub ecdf_max_before: f64,
    pub ecdf_mean_after: f64,
    pub ecdf_max_after: f64,
    pub var_ratio_before: f64,
    pub var_ratio_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub threshold: f64,
    pub covariates: Vec<CovariateBalance>,
}

impl BalanceReport {
    pub fn max_abs_smd_after(&self) -> f64 {
        self.covariates.iter().fold(0.0, |m, c| m.max(c.smd_after.abs()))
    }

    pub fn max_abs_smd_before(&self) -> f64 {
        self.covariates.iter().fold(0.0, |m, c| m.max(c.smd_before.abs()))
    }

    /// Covariates whose matched |SMD| is at or above the threshold.
    pub fn imbalanced(&self) -> Vec<&str> {
        self.covariates
            .iter()
            .filter(|c| !(c.smd_after.abs() < self.threshold))
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Plot-ready rows: covariate, sample (All/Matched), smd, ecdf_mean, ecdf_max.
    pub fn write_csv(&self, path: &std::path::Path) -> crate::error::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["covariate", "sample", "smd", "ecdf_mean", "ecdf_max", "var_ratio"])?;
        for c in &self.covariates {
            for (sample, smd, em, ex, vr) in [
                ("All", c.smd_before, c.ecdf_mean_before, c.ecdf_max_before, c.var_ratio_before),
                ("Matched", c.smd_after, c.ecdf_mean_after, c.ecdf_max_after, c.var_ratio_after),
            ] {
                w.write_record([
                    c.name.clone(),
                    sample.to_owned(),
                    crate::dataset::fmt_f64(smd),
                    crate::dataset::fmt_f64(em),
                    crate::dataset::fmt_f64(ex),
                    crate::dataset::fmt_f64(vr),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Moments {
    mean: f64,
    var: f64,
}

fn moments(x: impl Iterator<Item = (f64, f64)> + Clone) -> Moments {
    let (sw, swx) = x.clone().fold((0.0, 0.0), |(a, b), (v, w)| (a + w, b + w * v));
    let mean = swx / sw;
    let ss = x.fold(0.0, |a, (v, w)| a + w * (v - mean) * (v - mean));
    Moments { mean, var: ss / sw }
}

/// Mean and max absolute gap between weighted eCDFs, taken over the distinct
/// values observed in either group.
pub fn ecdf_distance(treated: &[(f64, f64)], control: &[(f64, f64)]) -> (f64, f64) {
    let wt: f64 = treated.iter().map(|p| p.1).sum();
    let wc: f64 = control.iter().map(|p| p.1).sum();
    if wt <= 0.0 || wc <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mut all: Vec<(f64, f64, f64)> = treated
        .iter()
        .map(|&(v, w)| (v, w / wt, 0.0))
        .chain(control.iter().map(|&(v, w)| (v, 0.0, w / wc)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut ft, mut fc) = (0.0, 0.0);
    let (mut sum, mut max, mut count) = (0.0, 0.0f64, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            ft += all[i].1;
            fc += all[i].2;
            i += 1;
        }
        let gap = (ft - fc).abs();
        sum += gap;
        max = max.max(gap);
        count += 1;
    }
    (sum / count as f64, max)
}

/// Balance of each covariate column between treated and control rows, for
/// the raw sample and for the matched sample under `matched_weights`.
///
/// SMDs divide by the treated-group SD of the raw sample (n - 1 form). When
/// that SD is zero the pooled raw SD is used instead, and a zero pooled SD
/// with equal means yields 0.
pub fn balance(x: &RowMatrix, treated: &[bool], matched_weights: &[f64], threshold: f64) -> BalanceReport {
    let n = x.nrows;
    let covariates = (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let raw_t: Vec<(f64, f64)> = (0..n).filter(|&i| treated[i]).map(|i| (col[i], 1.0)).collect();
            let raw_c: Vec<(f64, f64)> = (0..n).filter(|&i| !treated[i]).map(|i| (col[i], 1.0)).collect();
            let m_t: Vec<(f64, f64)> =
                (0..n).filter(|&i| treated[i] && matched_weights[i] > 0.0).map(|i| (col[i], matched_weights[i])).collect();
            let m_c: Vec<(f64, f64)> =
                (0..n).filter(|&i| !treated[i] && matched_weights[i] > 0.0).map(|i| (col[i], matched_weights[i])).collect();

            let rt = moments(raw_t.iter().copied());
            let rc = moments(raw_c.iter().copied());
            let nt = raw_t.len() as f64;
            let sd_t = (rt.var * nt / (nt - 1.0)).sqrt();
            let denom = if sd_t > 0.0 { sd_t } else { ((rt.var + rc.var) / 2.0).sqrt() };
            let smd = |a: f64, b: f64| {
                let d = a - b;
                if d == 0.0 {
                    0.0
                } else {
                    d / denom
                }
            };
            let mt = moments(m_t.iter().copied());
            let mc = moments(m_c.iter().copied());
            let (em_b, ex_b) = ecdf_distance(&raw_t, &raw_c);
            let (em_a, ex_a) = ecdf_distance(&m_t, &m_c);
            CovariateBalance {
                name: x.names[j].clone(),
                smd_before: smd(rt.mean, rc.mean),
                smd_after: smd(mt.mean, mc.mean),
                ecdf_mean_before: em_b,
                ecdf_max_before: ex_b,
                ecdf_mean_after: em_a,
                ecdf_max_after: ex_a,
                var_ratio_before: rt.var / rc.var,
                var_ratio_after: mt.var / mc.var,
            }
        })
        .collect();
    BalanceReport { threshold, covariates }
}
