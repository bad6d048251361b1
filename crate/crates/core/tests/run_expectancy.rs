use std::path::PathBuf;

use ettkit::run_expectancy::{
    build_re_matrix, delta_run_expectancy, inning_transitions, BaseOutState, GameState, InningLog, PlayTransition,
    RunExpectancyMatrix, N_STATES,
};
use ettkit::scm::{simulate_innings, simulated_re_matrix, InningModel};

const SEASON: i32 = 2021;

fn innings() -> Vec<InningLog> {
    simulate_innings(10_000, 17, &InningModel::default())
}

/// Mean runs-to-come per state, kept as a running average over visits.
fn streaming_oracle(innings: &[InningLog]) -> [f64; N_STATES] {
    let mut mean = [0.0; N_STATES];
    let mut seen = [0u64; N_STATES];
    for inning in innings {
        for (i, play) in inning.iter().enumerate() {
            let to_come: u32 = inning[i..].iter().map(|p| p.runs).sum();
            let k = play.state.index();
            seen[k] += 1;
            mean[k] += (f64::from(to_come) - mean[k]) / seen[k] as f64;
        }
    }
    mean
}

#[test]
fn matrix_matches_streaming_average() {
    let logs = innings();
    let m = build_re_matrix(&logs, SEASON).unwrap();
    let oracle = streaming_oracle(&logs);
    for s in BaseOutState::all() {
        assert!((m.get(s) - oracle[s.index()]).abs() < 1e-12, "{s}: {} vs {}", m.get(s), oracle[s.index()]);
    }
}

#[test]
fn simulated_matrix_falls_with_outs() {
    let m = simulated_re_matrix(&innings(), SEASON).unwrap();
    assert!(m.monotonicity_violations().is_empty());
    assert!(m.get(BaseOutState::empty(0)) > 0.3 && m.get(BaseOutState::empty(0)) < 0.8);
}

#[test]
fn inning_sums_telescope_exactly() {
    let logs = innings();
    let m = build_re_matrix(&logs, SEASON).unwrap();
    for log in &logs {
        let mut total = 0.0;
        for t in inning_transitions(log, SEASON) {
            total += delta_run_expectancy(&t, &m).unwrap();
        }
        let runs: u32 = log.iter().map(|p| p.runs).sum();
        assert_eq!(total + m.get(log[0].state) - f64::from(runs), 0.0);
    }
}

#[test]
fn inning_order_does_not_matter() {
    let logs = innings();
    let mut reversed = logs.clone();
    reversed.reverse();
    assert_eq!(build_re_matrix(&logs, SEASON).unwrap(), build_re_matrix(&reversed, SEASON).unwrap());
}

#[test]
fn scoreless_reversal_is_antisymmetric() {
    let m = build_re_matrix(&innings(), SEASON).unwrap();
    for a in BaseOutState::all() {
        for b in BaseOutState::all() {
            let go = PlayTransition { season: SEASON, initial: a, final_state: b.into(), delta_score: 0 };
            let back = PlayTransition { season: SEASON, initial: b, final_state: a.into(), delta_score: 0 };
            let d = delta_run_expectancy(&go, &m).unwrap();
            assert_eq!(d, -delta_run_expectancy(&back, &m).unwrap());
        }
    }
}

#[test]
fn csv_round_trip_keeps_season_and_values() {
    let m = build_re_matrix(&innings(), SEASON).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = m.write_csv(dir.path()).unwrap();
    assert!(path.ends_with("re_matrix_2021.csv"));
    assert_eq!(RunExpectancyMatrix::read_csv(&path).unwrap(), m);
}

fn fixture_2018() -> Option<RunExpectancyMatrix> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/re_matrix_2018.csv");
    if !path.exists() {
        eprintln!("skipping: {} not found; drop the published 2018 matrix there to run this check", path.display());
        return None;
    }
    Some(RunExpectancyMatrix::read_csv(&path).unwrap())
}

#[test]
fn strikeouts_in_2018() {
    let Some(m) = fixture_2018() else { return };
    let k = |initial: BaseOutState, after: BaseOutState| {
        let t = PlayTransition { season: 2018, initial, final_state: GameState::Live(after), delta_score: 0 };
        delta_run_expectancy(&t, &m).unwrap()
    };
    let empty = k(BaseOutState::empty(0), BaseOutState::empty(1));
    let loaded = k(BaseOutState::new(true, true, true, 1).unwrap(), BaseOutState::new(true, true, true, 2).unwrap());
    assert!((empty + 0.24).abs() < 0.005, "{empty}");
    assert!((loaded + 0.81).abs() < 0.005, "{loaded}");
}
