use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimate::{EttEstimate, Method, Subgroup};
use crate::linalg::wls;

use super::MatchedSet;

pub const TREATMENT_COLUMN: &str = "treated";

/// ETT on a matched set by g-computation.
///
/// Fits a weighted linear outcome model (treatment + `covariates`) over the
/// rows with positive match weight, predicts both potential outcomes for
/// every matched treated unit and averages the difference. The standard
/// error is the HC1 sandwich for the treatment coefficient, with match
/// weights entering the meat squared.
pub fn ett_gcomp(
    matched: &MatchedSet,
    outcome: &[f64],
    treated: &[bool],
    covariates: &Design,
    subgroup: Subgroup,
) -> Result<EttEstimate> {
    if matched.is_empty() {
        return Err(Error::EmptyMatchedSet);
    }
    let rows: Vec<usize> = (0..outcome.len()).filter(|&i| matched.weights[i] > 0.0).collect();
    let t: Vec<f64> = rows.iter().map(|&i| f64::from(u8::from(treated[i]))).collect();
    let x = covariates.matrix.select_rows(&rows).with_leading_column(TREATMENT_COLUMN, &t);
    let y: Vec<f64> = rows.iter().map(|&i| outcome[i]).collect();
    let w: Vec<f64> = rows.iter().map(|&i| matched.weights[i]).collect();
    let fit = wls(&x, &y, Some(&w))?;

    let mut diff_sum = 0.0;
    let mut wt = 0.0;
    let mut buf = Vec::with_capacity(x.ncols());
    for (k, &i) in rows.iter().enumerate() {
        if !treated[i] {
            continue;
        }
        buf.clear();
        buf.extend_from_slice(x.row(k));
        buf[0] = 1.0;
        let y1 = fit.predict(&buf);
        buf[0] = 0.0;
        let y0 = fit.predict(&buf);
        diff_sum += w[k] * (y1 - y0);
        wt += w[k];
    }
    let estimate = diff_sum / wt;
    let cov = fit.hc1(&x, Some(&w));
    let se = cov[(0, 0)].max(0.0).sqrt();
    let n_t = rows.iter().filter(|&&i| treated[i]).count();
    Ok(EttEstimate::wald(Method::Matching, subgroup, estimate, se, n_t, rows.len() - n_t)?
        .with_diagnostic("estimator", "g-computation on weighted linear outcome model")
        .with_diagnostic("se_type", "HC1")
        .with_diagnostic("unmatched_treated", matched.unmatched_treated)
        .with_diagnostic("effective_controls", matched.effective_controls)
        .with_diagnostic("caliper_width", &matched.caliper_width)
        .with_diagnostic("caliper_denominator", &matched.caliper_denominator)
        .with_diagnostic("empty_strata", &matched.empty_strata))
}
