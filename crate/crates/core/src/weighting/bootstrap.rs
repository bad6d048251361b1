use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::{quantile, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    /// Plate-appearance rows, i.i.d.
    #[default]
    Row,
    /// Whole games: every row of a drawn game enters together.
    Game,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: u64,
    pub unit: ResampleUnit,
    /// Refit the propensity model inside every resample.
    pub refit: bool,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self { replicates: 10_000, seed: 0, unit: ResampleUnit::Row, refit: true }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Successful replicate estimates, in replicate-index order.
    pub replicates: Vec<f64>,
    /// Replicate indices that lost a treatment arm and were skipped.
    pub skipped: Vec<usize>,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BootstrapResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["replicate", "estimate"])?;
        for (i, v) in self.replicates.iter().enumerate() {
            w.write_record([i.to_string(), crate::dataset::fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Resampling scheme over `n` rows, expressed as per-row inclusion counts.
#[derive(Debug, Clone)]
pub struct Resampler {
    n: usize,
    /// Row indices grouped by cluster; `None` for row resampling.
    clusters: Option<Vec<Vec<usize>>>,
}

impl Resampler {
    pub fn rows(n: usize) -> Self {
        Self { n, clusters: None }
    }

    /// Cluster resampling; rows sharing a label form one cluster.
    pub fn clustered<K: Ord + Clone>(labels: &[K]) -> Self {
        let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
        for (i, k) in labels.iter().enumerate() {
            groups.entry(k.clone()).or_default().push(i);
        }
        Self { n: labels.len(), clusters: Some(groups.into_values().collect()) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn counts<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        match &self.clusters {
            None => {
                for _ in 0..self.n {
                    c[rng.gen_range(0..self.n)] += 1.0;
                }
            }
            Some(groups) => {
                for _ in 0..groups.len() {
                    for &i in &groups[rng.gen_range(0..groups.len())] {
                        c[i] += 1.0;
                    }
                }
            }
        }
        c
    }
}

/// Run `estimator` on `plan.replicates` resamples.
///
/// The estimator sees each resample as a vector of per-row counts. A
/// replicate returning `ResampleDegenerate` or `OneClass` is skipped and
/// recorded; any other error aborts the run. Replicate `b` draws from its own
/// stream keyed by (`plan.seed`, `label`, `b`), so the result does not depend
/// on the number of worker threads.
pub fn bootstrap<F>(resampler: &Resampler, plan: &BootstrapPlan, label: &str, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    plan.validate()?;
    let outcomes: Vec<Result<f64>> = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(plan.seed, label, b as u64);
            estimator(&resampler.counts(&mut rng))
        })
        .collect();
    let mut replicates = Vec::with_capacity(plan.replicates);
    let mut skipped = Vec::new();
    for (b, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(v) => replicates.push(v),
            Err(Error::ResampleDegenerate | Error::OneClass) => skipped.push(b),
            Err(e) => return Err(e.context(format!("bootstrap replicate {b}"))),
        }
    }
    if replicates.is_empty() {
        return Err(Error::AllResamplesDegenerate(skipped.len()));
    }
    let std_error = if replicates.len() > 1 { sample_sd(&replicates) } else { 0.0 };
    Ok(BootstrapResult {
        lower: quantile(&replicates, 0.025),
        upper: quantile(&replicates, 0.975),
        std_error,
        replicates,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_counts_sum_to_n() {
        let r = Resampler::rows(50);
        let c = r.counts(&mut stream(1, "t", 0));
        assert_eq!(c.iter().sum::<f64>(), 50.0);
    }

    #[test]
    fn cluster_counts_move_whole_games() {
        let labels = [1, 1, 1, 2, 2, 3];
        let r = Resampler::clustered(&labels);
        for b in 0..20 {
            let c = r.counts(&mut stream(3, "t", b));
            assert_eq!(c[0], c[1]);
            assert_eq!(c[1], c[2]);
            assert_eq!(c[3], c[4]);
        }
    }

    #[test]
    fn degenerate_replicates_are_counted() {
        let plan = BootstrapPlan { replicates: 10, seed: 5, ..Default::default() };
        let r = bootstrap(&Resampler::rows(4), &plan, "t", |c| {
            if c[0] == 0.0 {
                Err(Error::ResampleDegenerate)
            } else {
                Ok(c[0])
            }
        })
        .unwrap();
        assert_eq!(r.replicates.len() + r.skipped.len(), 10);
    }

    #[test]
    fn other_errors_propagate() {
        let plan = BootstrapPlan { replicates: 3, ..Default::default() };
        let r = bootstrap(&Resampler::rows(4), &plan, "t", |_| Err(Error::SingularDesign("x".into())));
        assert!(matches!(r, Err(Error::Annotated { .. })));
    }
}
