//! Base-out states, run expectancy matrices and ΔRE arithmetic.
//!
//! Matrix entries are snapped to a 2^-40 grid on construction. Differences
//! and sums of grid values plus integer run counts are then exact in f64, so
//! ΔRE over a complete inning telescopes without rounding residue.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STATES: usize = 24;

const GRID: f64 = 1_099_511_627_776.0; // 2^40

fn snap(v: f64) -> f64 {
    (v * GRID).round() / GRID
}

/// Runner occupancy plus outs (0..=2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BaseOutState {
    runners: [bool; 3],
    outs: u8,
}

impl BaseOutState {
    pub fn new(first: bool, second: bool, third: bool, outs: u8) -> Result<Self> {
        if outs > 2 {
            return Err(Error::InvalidMatrix(format!("outs must be 0..=2, got {outs}")));
        }
        Ok(Self { runners: [first, second, third], outs })
    }

    pub fn empty(outs: u8) -> Self {
        Self::new(false, false, false, outs).expect("outs in range")
    }

    pub fn loaded(outs: u8) -> Self {
        Self::new(true, true, true, outs).expect("outs in range")
    }

    pub fn runners(&self) -> [bool; 3] {
        self.runners
    }

    pub fn outs(&self) -> u8 {
        self.outs
    }

    pub fn index(&self) -> usize {
        let bits = self.runners[0] as usize | (self.runners[1] as usize) << 1 | (self.runners[2] as usize) << 2;
        usize::from(self.outs) * 8 + bits
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < N_STATES);
        let bits = i % 8;
        Self {
            runners: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
            outs: (i / 8) as u8,
        }
    }

    pub fn all() -> impl Iterator<Item = BaseOutState> {
        (0..N_STATES).map(Self::from_index)
    }
}

impl fmt::Display for BaseOutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = |b: bool, c: char| if b { c } else { '_' };
        write!(
            f,
            "{}{}{} {} out",
            r(self.runners[0], '1'),
            r(self.runners[1], '2'),
            r(self.runners[2], '3'),
            self.outs
        )
    }
}

/// A live base-out state or the three-out end of the half inning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameState {
    Live(BaseOutState),
    Terminal,
}

impl From<BaseOutState> for GameState {
    fn from(s: BaseOutState) -> Self {
        GameState::Live(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunExpectancyMatrix {
    season: i32,
    values: [f64; N_STATES],
}

impl RunExpectancyMatrix {
    pub fn new(season: i32, values: [f64; N_STATES]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidMatrix(format!(
                    "entry for {} is {v}",
                    BaseOutState::from_index(i)
                )));
            }
        }
        Ok(Self { season, values: values.map(snap) })
    }

    pub fn season(&self) -> i32 {
        self.season
    }

    pub fn get(&self, s: BaseOutState) -> f64 {
        self.values[s.index()]
    }

    pub fn value(&self, s: GameState) -> f64 {
        match s {
            GameState::Live(s) => self.get(s),
            GameState::Terminal => 0.0,
        }
    }

    /// Runner configurations whose value rises with an extra out.
    pub fn monotonicity_violations(&self) -> Vec<(BaseOutState, BaseOutState)> {
        let mut bad = Vec::new();
        for s in BaseOutState::all().filter(|s| s.outs < 2) {
            let next = BaseOutState { outs: s.outs + 1, ..s };
            if self.get(next) > self.get(s) {
                bad.push((s, next));
            }
        }
        bad
    }

    /// Read a 24-row CSV (`run1,run2,run3,outs,re_value`). The season is the
    /// last four-digit run in the file name, e.g. `re_matrix_2018.csv`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let season = season_from_filename(path)
            .ok_or_else(|| Error::InvalidMatrix(format!("no season in file name {}", path.display())))?;
        let mut rdr = csv::Reader::from_path(path)?;
        let mut values = [f64::NAN; N_STATES];
        let mut seen = [false; N_STATES];
        for rec in rdr.deserialize::<MatrixRow>() {
            let rec = rec?;
            let s = BaseOutState::new(rec.run1 != 0, rec.run2 != 0, rec.run3 != 0, rec.outs)?;
            if seen[s.index()] {
                return Err(Error::InvalidMatrix(format!("duplicate row for {s}")));
            }
            seen[s.index()] = true;
            values[s.index()] = rec.re_value;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidMatrix(format!("missing row for {}", BaseOutState::from_index(i))));
        }
        Self::new(season, values)
    }

    /// Write `re_matrix_<season>.csv` into `dir`, returning the path.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("re_matrix_{}.csv", self.season));
        let mut w = csv::Writer::from_path(&path)?;
        for s in BaseOutState::all() {
            let [a, b, c] = s.runners;
            w.serialize(MatrixRow {
                run1: a as u8,
                run2: b as u8,
                run3: c as u8,
                outs: s.outs,
                re_value: self.get(s),
            })?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRow {
    run1: u8,
    run2: u8,
    run3: u8,
    outs: u8,
    re_value: f64,
}

fn season_from_filename(path: &Path) -> Option<i32> {
    let stem = path.file_stem()?.to_str()?;
    let digits: Vec<&str> = stem.split(|c: char| !c.is_ascii_digit()).filter(|d| d.len() == 4).collect();
    digits.last()?.parse().ok()
}

/// One play: the state it started in and the runs that scored on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Play {
    pub state: BaseOutState,
    pub runs: u32,
}

/// Plays of one half inning, ending with the play that made the third out.
pub type InningLog = Vec<Play>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayTransition {
    pub season: i32,
    pub initial: BaseOutState,
    pub final_state: GameState,
    pub delta_score: u32,
}

/// Consecutive transitions of an inning log; the last one ends in `Terminal`.
pub fn inning_transitions(log: &[Play], season: i32) -> Vec<PlayTransition> {
    log.iter()
        .enumerate()
        .map(|(i, p)| PlayTransition {
            season,
            initial: p.state,
            final_state: log.get(i + 1).map_or(GameState::Terminal, |n| GameState::Live(n.state)),
            delta_score: p.runs,
        })
        .collect()
}

/// Mean runs scored from each visit to a state through the end of its inning.
pub fn build_re_matrix(innings: &[InningLog], season: i32) -> Result<RunExpectancyMatrix> {
    if innings.iter().all(|i| i.is_empty()) {
        return Err(Error::EmptyInput("no plays in inning logs".into()));
    }
    let mut runs = [0u64; N_STATES];
    let mut visits = [0u64; N_STATES];
    for inning in innings {
        let mut remaining: u64 = inning.iter().map(|p| u64::from(p.runs)).sum();
        for play in inning {
            let k = play.state.index();
            runs[k] += remaining;
            visits[k] += 1;
            remaining -= u64::from(play.runs);
        }
    }
    let mut values = [0.0; N_STATES];
    for k in 0..N_STATES {
        if visits[k] == 0 {
            return Err(Error::UnvisitedState(BaseOutState::from_index(k)));
        }
        values[k] = runs[k] as f64 / visits[k] as f64;
    }
    RunExpectancyMatrix::new(season, values)
}

/// ΔRE = RE(final) - RE(initial) + runs scored, with RE(terminal) = 0.
pub fn delta_run_expectancy(t: &PlayTransition, m: &RunExpectancyMatrix) -> Result<f64> {
    if t.season != m.season {
        return Err(Error::SeasonMismatch { transition: t.season, matrix: m.season });
    }
    Ok(m.value(t.final_state) - m.get(t.initial) + f64::from(t.delta_score))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn every_state_once_scoreless() -> Vec<InningLog> {
        // Each inning walks through one runner configuration at 0, 1 and 2 outs.
        (0..8)
            .map(|bits| {
                (0..3)
                    .map(|outs| Play {
                        state: BaseOutState::from_index(outs * 8 + bits),
                        runs: 0,
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn state_indexing_round_trips() {
        for i in 0..N_STATES {
            assert_eq!(BaseOutState::from_index(i).index(), i);
        }
        assert_eq!(BaseOutState::all().count(), 24);
        assert!(BaseOutState::new(false, false, false, 3).is_err());
    }

    #[test]
    fn scoreless_innings_give_zero_matrix() {
        let m = build_re_matrix(&every_state_once_scoreless(), 2020).unwrap();
        assert!(BaseOutState::all().all(|s| m.get(s) == 0.0));
    }

    #[test]
    fn leadoff_homer_then_three_strikeouts() {
        // The homer returns the inning to bases empty, nobody out, so that
        // state is visited twice: once with 1 run to come, once with 0.
        let mut innings = vec![vec![
            Play { state: BaseOutState::empty(0), runs: 1 },
            Play { state: BaseOutState::empty(0), runs: 0 },
            Play { state: BaseOutState::empty(1), runs: 0 },
            Play { state: BaseOutState::empty(2), runs: 0 },
        ]];
        innings.extend(every_state_once_scoreless().into_iter().filter(|i| i[0].state.index() != 0));
        let m = build_re_matrix(&innings, 2020).unwrap();
        assert_eq!(m.get(BaseOutState::empty(0)), 0.5);
        assert_eq!(m.get(BaseOutState::empty(1)), 0.0);
        assert_eq!(m.get(BaseOutState::empty(2)), 0.0);
    }

    #[test]
    fn unvisited_state_is_reported() {
        let mut innings = every_state_once_scoreless();
        innings.pop();
        match build_re_matrix(&innings, 2020) {
            Err(Error::UnvisitedState(s)) => assert_eq!(s.runners(), [true, true, true]),
            other => panic!("expected UnvisitedState, got {other:?}"),
        }
        assert!(matches!(build_re_matrix(&[], 2020), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn identity_transition_is_zero() {
        let m = RunExpectancyMatrix::new(2019, [0.7; N_STATES]).unwrap();
        let s = BaseOutState::new(true, false, true, 1).unwrap();
        let t = PlayTransition { season: 2019, initial: s, final_state: s.into(), delta_score: 0 };
        assert_eq!(delta_run_expectancy(&t, &m).unwrap(), 0.0);
    }

    #[test]
    fn season_mismatch_is_an_error() {
        let m = RunExpectancyMatrix::new(2019, [0.5; N_STATES]).unwrap();
        let s = BaseOutState::empty(0);
        let t = PlayTransition { season: 2018, initial: s, final_state: GameState::Terminal, delta_score: 0 };
        assert!(matches!(delta_run_expectancy(&t, &m), Err(Error::SeasonMismatch { .. })));
    }

    #[test]
    fn rejects_negative_entries() {
        let mut v = [0.5; N_STATES];
        v[3] = -0.1;
        assert!(RunExpectancyMatrix::new(2019, v).is_err());
    }
}
