mod common;

use common::oracles::by_hand;
use common::{dataset, normal, rng, Row};
use ettkit::scm::{generate, ScmConfig};
use ettkit::weighting::{
    bootstrap, ett_iptw, iptw_point, odds_weights, trim_mask, trim_sensitivity, BootstrapPlan, IptwMode, IptwOptions, Resampler,
    DEFAULT_EPS,
};
use ettkit::{Hand, Subgroup};
use rand::Rng;

#[test]
fn four_row_fixture() {
    let y = [1.0, 0.0, 0.5, 0.5];
    let t = [true, true, false, false];
    let p = [0.5, 0.5, 0.2, 0.8];
    let hand = by_hand(&y, &t, &p);
    assert!((hand + 0.5625).abs() < 1e-12);
    let got = iptw_point(&y, &t, &p, None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    assert!((got + 0.5625).abs() < 1e-12, "{got}");
}

#[test]
fn matches_hand_evaluation_on_random_inputs() {
    let mut r = rng(6);
    for _ in 0..50 {
        let n = r.gen_range(4..60);
        let mut t: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
        t[0] = true;
        t[1] = false;
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let p: Vec<f64> = (0..n).map(|_| r.gen_range(0.02..0.98)).collect();
        let got = iptw_point(&y, &t, &p, None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
        assert!((got - by_hand(&y, &t, &p)).abs() < 1e-12);
    }
}

#[test]
fn row_permutation_and_integer_counts() {
    let mut r = rng(9);
    let n = 200;
    let t: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let p: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..0.9)).collect();
    let base = iptw_point(&y, &t, &p, None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    let perm: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let pt: Vec<bool> = perm.iter().map(|&i| t[i]).collect();
    let permuted = iptw_point(&pick(&y), &pt, &pick(&p), None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    assert!((base - permuted).abs() < 1e-12);

    // Doubling every row through counts leaves the estimate unchanged.
    let doubled = iptw_point(&y, &t, &p, Some(&vec![2.0; n]), IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    assert!((base - doubled).abs() < 1e-12);
}

#[test]
fn normalized_weights_sum_to_treated_count() {
    let mut r = rng(10);
    let t: Vec<bool> = (0..500).map(|_| r.gen_bool(0.3)).collect();
    let p: Vec<f64> = (0..500).map(|_| r.gen_range(0.01..0.95)).collect();
    let w = odds_weights(&t, &p, IptwMode::Normalized, DEFAULT_EPS).unwrap();
    let control: f64 = w.iter().zip(&t).filter(|(_, t)| !**t).map(|(w, _)| w).sum();
    assert!((control - t.iter().filter(|&&b| b).count() as f64).abs() < 1e-9);
}

#[test]
fn outcome_shift_with_true_propensities() {
    let sim = generate(&ScmConfig { seed: 44, n_units: 100_000, ..ScmConfig::standard() }).unwrap();
    let t = sim.dataset.treatments();
    let y = sim.dataset.outcomes();
    let shifted: Vec<f64> = y.iter().map(|v| v + 0.5).collect();
    let p = &sim.propensity;

    let a = iptw_point(&y, &t, p, None, IptwMode::Normalized, DEFAULT_EPS).unwrap();
    let b = iptw_point(&shifted, &t, p, None, IptwMode::Normalized, DEFAULT_EPS).unwrap();
    assert!((a - b).abs() < 1e-12);

    // Unnormalized: the shift cancels only in expectation, by c * (1 - S/n_t).
    let a = iptw_point(&y, &t, p, None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    let b = iptw_point(&shifted, &t, p, None, IptwMode::Unnormalized, DEFAULT_EPS).unwrap();
    let ones = vec![1.0; y.len()];
    let plan = BootstrapPlan { replicates: 200, seed: 3, refit: false, ..BootstrapPlan::default() };
    let boot = bootstrap(&Resampler::rows(y.len()), &plan, "shift", |c| {
        iptw_point(&ones, &t, p, Some(c), IptwMode::Unnormalized, DEFAULT_EPS)
    })
    .unwrap();
    assert!((a - b).abs() < 3.0 * 0.5 * boot.std_error, "shift moved the estimate by {}", b - a);
}

#[test]
fn constant_dataset_has_zero_width_interval() {
    let t: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
    let p = vec![0.5; 40];
    let plan = BootstrapPlan { replicates: 100, seed: 1, ..BootstrapPlan::default() };
    // The plug-in scales control outcomes by n_c / n_t, so only y = 0 is
    // constant under resampling; normalized weights absorb any level.
    for (level, mode) in [(0.0, IptwMode::Unnormalized), (0.25, IptwMode::Normalized)] {
        let y = vec![level; 40];
        let boot = bootstrap(&Resampler::rows(40), &plan, "constant", |c| iptw_point(&y, &t, &p, Some(c), mode, DEFAULT_EPS)).unwrap();
        assert_eq!(boot.std_error, 0.0);
        assert_eq!(boot.lower, boot.upper);
    }
}

#[test]
fn same_seed_is_bit_identical_across_thread_counts() {
    let sim = generate(&ScmConfig { seed: 5, n_units: 4_000, ..ScmConfig::standard() }).unwrap();
    let opts = IptwOptions { bootstrap: BootstrapPlan { replicates: 64, seed: 11, ..BootstrapPlan::default() }, ..IptwOptions::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| ett_iptw(&sim.dataset, Subgroup::Left, &opts).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.bootstrap.replicates, b.bootstrap.replicates);
    assert_eq!((a.estimate.lower, a.estimate.upper), (b.estimate.lower, b.estimate.upper));
}

#[test]
fn scm_effect_within_two_bootstrap_ses() {
    let sim = generate(&ScmConfig { seed: 202, ..ScmConfig::standard() }).unwrap();
    let opts = IptwOptions { bootstrap: BootstrapPlan { replicates: 200, seed: 2, ..BootstrapPlan::default() }, ..IptwOptions::default() };
    let fit = ett_iptw(&sim.dataset, Subgroup::Pooled, &opts).unwrap();
    let e = &fit.estimate;
    assert!((e.estimate + 0.03).abs() < 2.0 * e.std_error, "{} ± {}", e.estimate, e.std_error);
    assert!(e.lower <= e.estimate && e.estimate <= e.upper);
}

#[test]
fn uniform_probabilities_trim_five_percent() {
    let p: Vec<f64> = (0..1000).map(|i| 0.05 + 0.9 * i as f64 / 999.0).collect();
    let (_, keep) = trim_mask(&p, 95.0);
    assert_eq!(keep.iter().filter(|&&k| k).count(), 950);
}

#[test]
fn trimming_removes_a_dominating_cluster() {
    let mut r = rng(13);
    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut p = Vec::new();
    for i in 0..2000 {
        let treated = i % 2 == 0;
        t.push(treated);
        p.push(r.gen_range(0.2..0.6));
        y.push(0.1 * normal(&mut r) - if treated { 0.05 } else { 0.0 });
    }
    // A few controls with p = 0.99 and large outcomes.
    for _ in 0..40 {
        t.push(false);
        p.push(0.99);
        y.push(2.0);
    }
    let full = iptw_point(&y, &t, &p, None, IptwMode::Unnormalized, 1e-6).unwrap();
    let (_, keep) = trim_mask(&p, 95.0);
    let rows: Vec<usize> = (0..y.len()).filter(|&i| keep[i]).collect();
    let sel = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let st: Vec<bool> = rows.iter().map(|&i| t[i]).collect();
    let trimmed = iptw_point(&sel(&y), &st, &sel(&p), None, IptwMode::Unnormalized, 1e-6).unwrap();
    assert!(full < -1.0);
    assert!((trimmed + 0.05).abs() < (full + 0.05).abs());
    assert!((trimmed + 0.05).abs() < 0.05);
}

#[test]
fn trim_sensitivity_reports_both_estimates() {
    let mut r = rng(14);
    let rows = (0..800)
        .map(|i| {
            let c = normal(&mut r);
            Row {
                year: 2020 + (i % 2) as i32,
                stand: Hand::Right,
                treated: r.gen_bool(ettkit::propensity::logistic(c - 0.3)),
                y: 0.2 * c + 0.3 * normal(&mut r),
                z: 0.3,
                covariates: vec![c],
            }
        })
        .collect();
    let ds = dataset(&["c"], rows);
    let opts = IptwOptions { bootstrap: BootstrapPlan { replicates: 50, seed: 4, ..BootstrapPlan::default() }, ..IptwOptions::default() };
    let cmp = trim_sensitivity(&ds, Subgroup::Right, &opts, 95.0).unwrap();
    assert_eq!(cmp.n_dropped, 40);
    assert_eq!(cmp.full.n_treated + cmp.full.n_control, 800);
    assert_eq!(cmp.trimmed.n_treated + cmp.trimmed.n_control, 760);
}
