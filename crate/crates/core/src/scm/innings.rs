use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::run_expectancy::{build_re_matrix, BaseOutState, InningLog, Play, RunExpectancyMatrix};

/// Plate-appearance outcome probabilities of the inning chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InningModel {
    pub walk: f64,
    pub single: f64,
    pub double: f64,
    pub triple: f64,
    pub home_run: f64,
    /// Chance that an out with a runner on third and fewer than two outs
    /// scores that runner.
    pub sac_fly: f64,
}

impl Default for InningModel {
    fn default() -> Self {
        Self { walk: 0.085, single: 0.145, double: 0.045, triple: 0.005, home_run: 0.03, sac_fly: 0.3 }
    }
}

fn at(r: [bool; 3], outs: u8) -> BaseOutState {
    BaseOutState::new(r[0], r[1], r[2], outs).expect("outs below three")
}

fn advance(state: BaseOutState, bases: u8, batter_to: Option<u8>) -> (BaseOutState, u32) {
    let mut runs = 0;
    let mut occ = [false; 3];
    for (b, &on) in state.runners().iter().enumerate() {
        if on {
            let to = b as u8 + bases;
            if to >= 3 {
                runs += 1;
            } else {
                occ[to as usize] = true;
            }
        }
    }
    match batter_to {
        Some(b) if b >= 3 => runs += 1,
        Some(b) => occ[b as usize] = true,
        None => {}
    }
    (at(occ, state.outs()), runs)
}

fn walk(state: BaseOutState) -> (BaseOutState, u32) {
    let [f, s, t] = state.runners();
    let runners = [true, s || f, t || (s && f)];
    let runs = u32::from(f && s && t);
    (at(runners, state.outs()), runs)
}

/// One half inning as a Markov chain over plate-appearance outcomes.
pub fn simulate_inning<R: Rng>(model: &InningModel, rng: &mut R) -> InningLog {
    let mut log = Vec::new();
    let mut state = BaseOutState::empty(0);
    loop {
        let u: f64 = rng.gen();
        let mut edges = [model.walk, model.single, model.double, model.triple, model.home_run].into_iter().scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        });
        let outcome = edges.position(|e| u < e);
        let (next, runs) = match outcome {
            Some(0) => walk(state),
            Some(1) => advance(state, 1, Some(0)),
            Some(2) => advance(state, 2, Some(1)),
            Some(3) => advance(state, 3, Some(2)),
            Some(_) => advance(state, 4, Some(4)),
            None => {
                if state.outs() == 2 {
                    log.push(Play { state, runs: 0 });
                    return log;
                }
                let mut runners = state.runners();
                let mut runs = 0;
                if runners[2] && rng.gen::<f64>() < model.sac_fly {
                    runners[2] = false;
                    runs = 1;
                }
                (at(runners, state.outs() + 1), runs)
            }
        };
        log.push(Play { state, runs });
        state = next;
    }
}

pub fn simulate_innings(n: usize, seed: u64, model: &InningModel) -> Vec<InningLog> {
    let mut rng = stream(seed, "scm/innings", 0);
    (0..n).map(|_| simulate_inning(model, &mut rng)).collect()
}

/// Build a matrix from simulated innings and require run expectancy to
/// fall as outs rise for every runner configuration.
pub fn simulated_re_matrix(innings: &[InningLog], season: i32) -> Result<RunExpectancyMatrix> {
    let m = build_re_matrix(innings, season)?;
    if let Some((a, b)) = m.monotonicity_violations().first() {
        return Err(Error::InvalidMatrix(format!("RE({b}) = {} exceeds RE({a}) = {}", m.get(*b), m.get(*a))));
    }
    Ok(m)
}
