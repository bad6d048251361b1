//! Dense least squares on tall, narrow designs.
//!
//! Designs are stored row-major and never materialize an intercept column.
//! Fits centre each column at its weighted mean, which keeps the normal
//! equations well conditioned for raw-scale covariates such as spin rate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major design matrix with named columns (no intercept column).
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    pub names: Vec<String>,
    pub nrows: usize,
    pub data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(names: Vec<String>, nrows: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * names.len(), "design buffer size");
        Self { names, nrows, data }
    }

    pub fn empty(nrows: usize) -> Self {
        Self { names: Vec::new(), nrows, data: Vec::new() }
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Self {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let mut data = vec![0.0; n * p];
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n);
            for (i, v) in col.iter().enumerate() {
                data[i * p + j] = *v;
            }
        }
        Self::new(names, n, data)
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.data[i * self.ncols() + j]).collect()
    }

    /// Append columns of `other` (same row count) to the right.
    pub fn hstack(&self, other: &RowMatrix) -> RowMatrix {
        assert_eq!(self.nrows, other.nrows);
        let (p, q) = (self.ncols(), other.ncols());
        let mut data = Vec::with_capacity(self.nrows * (p + q));
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        RowMatrix::new(names, self.nrows, data)
    }

    pub fn select_rows(&self, rows: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix::new(self.names.clone(), rows.len(), data)
    }

    pub fn select_columns(&self, cols: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        RowMatrix::new(names, self.nrows, data)
    }

    /// Prepend a single column.
    pub fn with_leading_column(&self, name: &str, values: &[f64]) -> RowMatrix {
        let lead = RowMatrix::new(vec![name.to_owned()], self.nrows, values.to_vec());
        lead.hstack(self)
    }
}

/// Cholesky factorization that names the first collinear column it meets.
///
/// `a` is scaled to unit diagonal before factoring; a pivot below `tol`
/// means that column lies in the span of the ones before it.
pub fn checked_cholesky(a: &DMatrix<f64>, names: &[String], tol: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let p = a.nrows();
    let scale: Vec<f64> = (0..p).map(|j| a[(j, j)].max(0.0).sqrt()).collect();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        if scale[j] == 0.0 {
            return Err(Error::SingularDesign(names[j].clone()));
        }
        let mut d = 1.0;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < tol {
            return Err(Error::SingularDesign(names[j].clone()));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)] / (scale[i] * scale[j]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    a.clone()
        .cholesky()
        .ok_or_else(|| Error::SingularDesign(names.last().cloned().unwrap_or_default()))
}

pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Weighted least-squares fit with an implicit intercept.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Weighted column means used for centring.
    pub centers: Vec<f64>,
    /// (Xc' W Xc)^-1 for the centred slope block.
    pub bread: DMatrix<f64>,
    /// Rows with positive weight.
    pub n_used: usize,
}

impl LinearFit {
    pub fn slope(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.slopes[j])
    }

    /// Weighted residual sum of squares.
    pub fn ssr(&self, weights: Option<&[f64]>) -> f64 {
        match weights {
            None => self.residuals.iter().map(|e| e * e).sum(),
            Some(w) => self.residuals.iter().zip(w).map(|(e, w)| w * e * e).sum(),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.slopes).map(|(x, b)| x * b).sum::<f64>()
    }

    /// HC1 sandwich covariance of the slopes.
    ///
    /// `x` is the regressor matrix the bread was built from (for 2SLS the
    /// fitted first-stage values); `resid` are the residuals to plug into
    /// the meat. Weights enter the meat squared.
    pub fn hc1_with(&self, x: &RowMatrix, weights: Option<&[f64]>, resid: &[f64]) -> DMatrix<f64> {
        let p = self.slopes.len();
        let mut meat = DMatrix::<f64>::zeros(p, p);
        let mut xc = vec![0.0; p];
        for i in 0..x.nrows {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            let s = w * resid[i];
            for (j, v) in x.row(i).iter().enumerate() {
                xc[j] = (v - self.centers[j]) * s;
            }
            for a in 0..p {
                for b in 0..=a {
                    meat[(a, b)] += xc[a] * xc[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                meat[(b, a)] = meat[(a, b)];
            }
        }
        let n = self.n_used as f64;
        let k = (p + 1) as f64;
        let scale = if n > k { n / (n - k) } else { f64::NAN };
        &self.bread * meat * &self.bread * scale
    }

    pub fn hc1(&self, x: &RowMatrix, weights: Option<&[f64]>) -> DMatrix<f64> {
        self.hc1_with(x, weights, &self.residuals)
    }
}

/// Weighted least squares of `y` on an intercept plus the columns of `x`.
pub fn wls(x: &RowMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.nrows;
    let p = x.ncols();
    assert_eq!(y.len(), n);
    if let Some(w) = weights {
        assert_eq!(w.len(), n);
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let n_used = (0..n).filter(|&i| w_at(i) > 0.0).count();
    if n_used == 0 {
        return Err(Error::EmptyInput("regression has no positively weighted rows".into()));
    }

    let mut sw = 0.0;
    let mut centers = vec![0.0; p];
    let mut ybar = 0.0;
    for i in 0..n {
        let w = w_at(i);
        sw += w;
        ybar += w * y[i];
        for (c, v) in centers.iter_mut().zip(x.row(i)) {
            *c += w * v;
        }
    }
    ybar /= sw;
    for c in &mut centers {
        *c /= sw;
    }

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut xc = vec![0.0; p];
    for i in 0..n {
        let w = w_at(i);
        if w == 0.0 {
            continue;
        }
        for (j, v) in x.row(i).iter().enumerate() {
            xc[j] = v - centers[j];
        }
        let yc = y[i] - ybar;
        for a in 0..p {
            let wa = w * xc[a];
            xty[a] += wa * yc;
            for b in 0..=a {
                xtx[(a, b)] += wa * xc[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }

    let (slopes, bread) = if p == 0 {
        (Vec::new(), DMatrix::zeros(0, 0))
    } else {
        let chol = checked_cholesky(&xtx, &x.names, COLLINEARITY_TOL)?;
        let beta = chol.solve(&xty);
        (beta.iter().copied().collect::<Vec<_>>(), chol.inverse())
    };
    let intercept = ybar - centers.iter().zip(&slopes).map(|(c, b)| c * b).sum::<f64>();

    let mut fitted = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let f = intercept + x.row(i).iter().zip(&slopes).map(|(v, b)| v * b).sum::<f64>();
        fitted.push(f);
        residuals.push(y[i] - f);
    }
    Ok(LinearFit {
        names: x.names.clone(),
        intercept,
        slopes,
        residuals,
        fitted,
        centers,
        bread,
        n_used,
    })
}

/// Weighted total sum of squares about the weighted mean.
pub fn tss(y: &[f64], weights: Option<&[f64]>) -> f64 {
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..y.len()).map(w_at).sum();
    let m: f64 = (0..y.len()).map(|i| w_at(i) * y[i]).sum::<f64>() / sw;
    (0..y.len()).map(|i| w_at(i) * (y[i] - m) * (y[i] - m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        let x1: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 + 2200.0).collect();
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 1.5 - 0.25 * a + 0.01 * b).collect();
        let x = RowMatrix::from_columns(vec!["a".into(), "b".into()], &[x1, x2]);
        let fit = wls(&x, &y, None).unwrap();
        assert!((fit.slopes[0] + 0.25).abs() < 1e-10);
        assert!((fit.slopes[1] - 0.01).abs() < 1e-10);
        assert!((fit.intercept - 1.5).abs() < 1e-8);
    }

    #[test]
    fn duplicated_column_is_named() {
        let a: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let x = RowMatrix::from_columns(vec!["a".into(), "a_copy".into()], &[a.clone(), a]);
        let y = vec![1.0; 10];
        match wls(&x, &y, None) {
            Err(Error::SingularDesign(name)) => assert_eq!(name, "a_copy"),
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn constant_column_is_collinear_with_intercept() {
        let x = RowMatrix::from_columns(vec!["c".into()], &[vec![3.0; 8]]);
        assert!(matches!(wls(&x, &[0.0; 8], None), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn integer_weights_match_row_duplication() {
        let xs = [0.3, 1.1, 2.0, 2.9, 4.2];
        let ys = [1.0, 0.5, 2.5, 2.0, 4.0];
        let w = [1.0, 2.0, 0.0, 3.0, 1.0];
        let x = RowMatrix::from_columns(vec!["x".into()], &[xs.to_vec()]);
        let fit_w = wls(&x, &ys, Some(&w)).unwrap();
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for i in 0..5 {
            for _ in 0..w[i] as usize {
                dx.push(xs[i]);
                dy.push(ys[i]);
            }
        }
        let xd = RowMatrix::from_columns(vec!["x".into()], &[dx]);
        let fit_d = wls(&xd, &dy, None).unwrap();
        assert!((fit_w.slopes[0] - fit_d.slopes[0]).abs() < 1e-12);
        assert!((fit_w.intercept - fit_d.intercept).abs() < 1e-12);
    }
}
