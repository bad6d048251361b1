//! Build a run-expectancy matrix from simulated half innings and price a
//! few plays with it.

use ettkit::run_expectancy::{delta_run_expectancy, inning_transitions, BaseOutState, GameState, PlayTransition};
use ettkit::scm::{simulate_innings, simulated_re_matrix, InningModel};

fn main() -> ettkit::Result<()> {
    let innings = simulate_innings(20_000, 7, &InningModel::default());
    let m = simulated_re_matrix(&innings, 2018)?;

    println!("state        RE");
    for s in BaseOutState::all() {
        println!("{:<12} {:.3}", s.to_string(), m.get(s));
    }

    let strikeout = PlayTransition {
        season: 2018,
        initial: BaseOutState::empty(0),
        final_state: GameState::Live(BaseOutState::empty(1)),
        delta_score: 0,
    };
    println!("\nleadoff strikeout: {:+.3} runs", delta_run_expectancy(&strikeout, &m)?);

    // An inning's ΔRE sums to runs scored minus the starting expectancy.
    let first = &innings[0];
    let total: f64 = inning_transitions(first, 2018).iter().map(|t| delta_run_expectancy(t, &m)).sum::<ettkit::Result<f64>>()?;
    let runs: u32 = first.iter().map(|p| p.runs).sum();
    println!("first inning: {} plays, {runs} runs, sum of ΔRE {total:+.3}", first.len());
    Ok(())
}
