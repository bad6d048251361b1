use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisDataset;
use crate::error::{Error, Result};
use crate::stats::sample_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactKey {
    GameYear,
    Stand,
    PThrows,
}

/// Order in which treated units take their turn within a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GreedyOrder {
    #[default]
    DescendingScore,
    AscendingScore,
    RowOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSpec {
    /// Controls per treated unit.
    pub ratio: usize,
    /// Caliper in SDs of the linear score.
    pub caliper_sd: f64,
    /// Times a single control may be used.
    pub max_reuse: usize,
    pub exact_keys: Vec<ExactKey>,
    /// Matching runs separately within each level of this key.
    pub subgroup_key: Option<ExactKey>,
    pub order: GreedyOrder,
}

impl Default for MatchSpec {
    /// 3:1, caliper 0.15 SD, re-use capped at 5, exact on year, split by
    /// batter handedness.
    fn default() -> Self {
        Self {
            ratio: 3,
            caliper_sd: 0.15,
            max_reuse: 5,
            exact_keys: vec![ExactKey::GameYear],
            subgroup_key: Some(ExactKey::Stand),
            order: GreedyOrder::DescendingScore,
        }
    }
}

impl MatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratio < 1 {
            return Err(Error::InvalidConfig("match ratio must be >= 1".into()));
        }
        if !(self.caliper_sd > 0.0) {
            return Err(Error::InvalidConfig("caliper must be > 0".into()));
        }
        if self.max_reuse < 1 {
            return Err(Error::InvalidConfig("max_reuse must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub treated: usize,
    pub control: usize,
    pub distance: f64,
    /// 0-based greedy pass that produced the pair.
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSet {
    pub pairs: Vec<MatchPair>,
    /// Per-row weight: 1 for matched treated, summed 1/k shares for
    /// controls, 0 for anything unmatched.
    pub weights: Vec<f64>,
    pub n_treated_matched: usize,
    pub unmatched_treated: usize,
    pub n_controls_used: usize,
    /// Kish effective sample size of the control weights.
    pub effective_controls: f64,
    /// Absolute caliper per subgroup (score SD x caliper_sd).
    pub caliper_width: BTreeMap<String, f64>,
    pub caliper_denominator: String,
    /// Strata holding treated units but no controls.
    pub empty_strata: Vec<String>,
}

impl MatchedSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn uses(&self, control: usize) -> usize {
        self.pairs.iter().filter(|p| p.control == control).count()
    }
}

/// Greedy k:1 nearest-neighbour matching on a score.
///
/// Each of `spec.ratio` passes walks the treated units (by default in
/// descending score) and gives each one its nearest still-eligible control:
/// same stratum, within the caliper, under the re-use cap and not already
/// paired with that unit. Equal distances go to the lower row index. The
/// caliper is `spec.caliper_sd` times the sample SD of all `scores` passed in.
pub fn nn_match(scores: &[f64], treated: &[bool], strata: &[String], spec: &MatchSpec) -> Result<MatchedSet> {
    spec.validate()?;
    let n = scores.len();
    assert_eq!(treated.len(), n);
    assert_eq!(strata.len(), n);
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("score for row {i} is not finite")));
    }
    let sd = sample_sd(scores);
    let width = if sd.is_finite() { spec.caliper_sd * sd } else { 0.0 };

    let mut by_stratum: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..n {
        let e = by_stratum.entry(strata[i].as_str()).or_default();
        if treated[i] {
            e.0.push(i);
        } else {
            e.1.push(i);
        }
    }

    let mut pairs = Vec::new();
    let mut empty_strata = Vec::new();
    for (key, (t_rows, c_rows)) in &by_stratum {
        if t_rows.is_empty() {
            continue;
        }
        if c_rows.is_empty() {
            empty_strata.push((*key).to_owned());
            continue;
        }
        pairs.extend(match_stratum(scores, t_rows, c_rows, width, spec));
    }
    Ok(assemble(n, treated, pairs, width, empty_strata))
}

fn treated_order(scores: &[f64], t_rows: &[usize], order: GreedyOrder) -> Vec<usize> {
    let mut v = t_rows.to_vec();
    match order {
        GreedyOrder::DescendingScore => v.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))),
        GreedyOrder::AscendingScore => v.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b))),
        GreedyOrder::RowOrder => v.sort_unstable(),
    }
    v
}

fn match_stratum(scores: &[f64], t_rows: &[usize], c_rows: &[usize], width: f64, spec: &MatchSpec) -> Vec<MatchPair> {
    // Controls sorted by (score, row); positions index this order.
    let mut controls = c_rows.to_vec();
    controls.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let c_scores: Vec<f64> = controls.iter().map(|&c| scores[c]).collect();
    let mut available: BTreeSet<usize> = (0..controls.len()).collect();
    let mut uses = vec![0usize; controls.len()];

    let order = treated_order(scores, t_rows, spec.order);
    let mut taken: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    let mut pairs = Vec::new();

    for pass in 0..spec.ratio {
        for (slot, &t) in order.iter().enumerate() {
            if taken[slot].len() < pass {
                continue;
            }
            let s = scores[t];
            let split = c_scores.partition_point(|c| *c < s);
            let eligible = |p: &usize| !taken[slot].contains(p);

            let mut right: Option<(f64, usize)> = None;
            for &p in available.range(split..) {
                if !eligible(&p) {
                    continue;
                }
                let d = (s - c_scores[p]).abs();
                match right {
                    None => right = Some((d, p)),
                    Some((best, bp)) if d == best => {
                        if controls[p] < controls[bp] {
                            right = Some((d, p));
                        }
                    }
                    Some(_) => break,
                }
            }
            let mut left: Option<(f64, usize)> = None;
            for &p in available.range(..split).rev() {
                if !eligible(&p) {
                    continue;
                }
                let d = (s - c_scores[p]).abs();
                match left {
                    None => left = Some((d, p)),
                    Some((best, bp)) if d == best => {
                        if controls[p] < controls[bp] {
                            left = Some((d, p));
                        }
                    }
                    Some(_) => break,
                }
            }
            let pick = match (left, right) {
                (Some(l), Some(r)) => {
                    if l.0 < r.0 || (l.0 == r.0 && controls[l.1] < controls[r.1]) {
                        Some(l)
                    } else {
                        Some(r)
                    }
                }
                (l, r) => l.or(r),
            };
            if let Some((d, p)) = pick {
                if d <= width {
                    taken[slot].push(p);
                    uses[p] += 1;
                    if uses[p] >= spec.max_reuse {
                        available.remove(&p);
                    }
                    pairs.push(MatchPair { treated: t, control: controls[p], distance: d, pass });
                }
            }
        }
    }
    pairs
}

pub(crate) fn assemble(n: usize, treated: &[bool], pairs: Vec<MatchPair>, width: f64, empty_strata: Vec<String>) -> MatchedSet {
    let mut per_treated: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &pairs {
        *per_treated.entry(p.treated).or_default() += 1;
    }
    let mut weights = vec![0.0; n];
    for p in &pairs {
        weights[p.treated] = 1.0;
        weights[p.control] += 1.0 / per_treated[&p.treated] as f64;
    }
    let control_w: Vec<f64> = (0..n).filter(|&i| !treated[i] && weights[i] > 0.0).map(|i| weights[i]).collect();
    let sw: f64 = control_w.iter().sum();
    let sw2: f64 = control_w.iter().map(|w| w * w).sum();
    let n_treated = treated.iter().filter(|t| **t).count();
    let mut caliper_width = BTreeMap::new();
    caliper_width.insert("all".to_owned(), width);
    MatchedSet {
        n_treated_matched: per_treated.len(),
        unmatched_treated: n_treated - per_treated.len(),
        n_controls_used: control_w.len(),
        effective_controls: if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 },
        pairs,
        weights,
        caliper_width,
        caliper_denominator: "sample SD of the linear score over the subgroup before matching".into(),
        empty_strata,
    }
}

fn key_label(ds: &AnalysisDataset, i: usize, key: ExactKey) -> String {
    let r = &ds.rows[i];
    match key {
        ExactKey::GameYear => r.key.game_year.to_string(),
        ExactKey::Stand => format!("stand={}", r.stand),
        ExactKey::PThrows => format!("p_throws={}", r.p_throws),
    }
}

/// Match a whole dataset: split by the subgroup key, build exact-key strata,
/// run [`nn_match`] per subgroup and merge the results in subgroup order.
pub fn match_dataset(ds: &AnalysisDataset, scores: &[f64], spec: &MatchSpec) -> Result<MatchedSet> {
    spec.validate()?;
    let n = ds.len();
    let treated = ds.treatments();
    let strata: Vec<String> = (0..n)
        .map(|i| spec.exact_keys.iter().map(|k| key_label(ds, i, *k)).collect::<Vec<_>>().join("|"))
        .collect();
    let groups: BTreeMap<String, Vec<usize>> = (0..n).fold(BTreeMap::new(), |mut m, i| {
        let g = spec.subgroup_key.map_or_else(|| "all".to_owned(), |k| key_label(ds, i, k));
        m.entry(g).or_insert_with(Vec::new).push(i);
        m
    });

    let mut pairs = Vec::new();
    let mut empty = Vec::new();
    let mut widths = BTreeMap::new();
    for (g, rows) in &groups {
        let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
        let t: Vec<bool> = rows.iter().map(|&i| treated[i]).collect();
        let k: Vec<String> = rows.iter().map(|&i| strata[i].clone()).collect();
        let part = nn_match(&s, &t, &k, spec)?;
        widths.insert(g.clone(), part.caliper_width["all"]);
        empty.extend(part.empty_strata.into_iter().map(|e| format!("{g}|{e}")));
        pairs.extend(part.pairs.into_iter().map(|p| MatchPair { treated: rows[p.treated], control: rows[p.control], ..p }));
    }
    let mut set = assemble(n, &treated, pairs, f64::NAN, empty);
    set.caliper_width = widths;
    Ok(set)
}
