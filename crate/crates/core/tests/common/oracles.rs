use ettkit::matching::{MatchPair, MatchSpec};
use ettkit::propensity::logistic;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{normal, rng};

/// Plain Newton-Raphson on the raw design with an intercept column.
pub fn newton_oracle(columns: &[Vec<f64>], t: &[bool]) -> Vec<f64> {
    let n = t.len();
    let p = columns.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let y = DVector::from_iterator(n, t.iter().map(|&b| f64::from(u8::from(b))));
    let mut beta = DVector::zeros(p);
    for _ in 0..200 {
        let eta = &x * &beta;
        let prob = eta.map(logistic);
        let grad = x.transpose() * (&y - &prob);
        let w = prob.map(|q| q * (1.0 - q));
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            h += w[i] * row.transpose() * row;
        }
        let step = h.lu().solve(&grad).expect("information matrix is invertible");
        beta += &step;
        if step.amax() < 1e-15 {
            break;
        }
    }
    beta.iter().copied().collect()
}

pub fn random_design(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng(seed);
    let n = 200;
    let a: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let b: Vec<f64> = (0..n).map(|_| 50.0 + 10.0 * normal(&mut r)).collect();
    let c: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.gen_bool(0.4)))).collect();
    let coef = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-0.05..0.05), r.gen_range(-1.0..1.0)];
    let t = (0..n)
        .map(|i| {
            let eta = coef[0] + coef[1] * a[i] + coef[2] * (b[i] - 50.0) + coef[3] * c[i];
            r.gen_bool(logistic(eta))
        })
        .collect();
    (vec![a, b, c], t)
}

/// Greedy matching written as plainly as possible: every pass, every
/// treated unit in turn scans all controls.
pub fn brute_greedy(scores: &[f64], treated: &[bool], spec: &MatchSpec) -> Vec<(usize, usize, usize)> {
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let width = spec.caliper_sd * sd;
    let mut order: Vec<usize> = (0..n).filter(|&i| treated[i]).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut uses = vec![0; n];
    let mut got: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out = Vec::new();
    for pass in 0..spec.ratio {
        for &t in &order {
            if got[t].len() != pass {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for c in 0..n {
                if treated[c] || uses[c] >= spec.max_reuse || got[t].contains(&c) {
                    continue;
                }
                let d = (scores[t] - scores[c]).abs();
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
            if let Some((d, c)) = best {
                if d <= width {
                    uses[c] += 1;
                    got[t].push(c);
                    out.push((t, c, pass));
                }
            }
        }
    }
    out
}

pub fn triples(pairs: &[MatchPair]) -> Vec<(usize, usize, usize)> {
    pairs.iter().map(|p| (p.treated, p.control, p.pass)).collect()
}

/// The odds-weighted contrast written out term by term.
pub fn by_hand(y: &[f64], t: &[bool], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    let n_t = t.iter().filter(|&&b| b).count() as f64;
    let treated_mean = (0..y.len()).filter(|&i| t[i]).map(|i| y[i]).sum::<f64>() / n_t;
    let weighted: f64 = (0..y.len()).map(|i| if t[i] { 0.0 } else { p[i] / (1.0 - p[i]) * y[i] }).sum::<f64>() / n;
    treated_mean - weighted / (n_t / n)
}

pub fn binary_iv_fixture(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let z: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.gen_bool(0.5)))).collect();
    let u: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let t: Vec<f64> = (0..n).map(|i| f64::from(u8::from(r.gen_bool(if z[i] > 0.5 { 0.6 } else { 0.25 }) || u[i] > 1.5))).collect();
    let y: Vec<f64> = (0..n).map(|i| -0.03 * t[i] + 0.2 * u[i] + 0.3 * normal(&mut r)).collect();
    (y, t, z)
}

/// (E[y | z=1] - E[y | z=0]) / (E[t | z=1] - E[t | z=0]).
pub fn wald_ratio(y: &[f64], t: &[f64], z: &[f64]) -> f64 {
    let mean_where = |v: &[f64], level: f64| {
        let sel: Vec<f64> = (0..v.len()).filter(|&i| z[i] == level).map(|i| v[i]).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    (mean_where(y, 1.0) - mean_where(y, 0.0)) / (mean_where(t, 1.0) - mean_where(t, 0.0))
}
