//! 3:1 caliper matching on the linear propensity score, balance before
//! and after, and the g-computation estimate on the matched set.

use ettkit::matching::{ett_match, MatchOptions};
use ettkit::scm::{generate, ScmConfig};
use ettkit::Subgroup;

fn main() -> ettkit::Result<()> {
    let sim = generate(&ScmConfig { seed: 2, ..ScmConfig::standard() })?;
    let opts = MatchOptions::default();

    for subgroup in [Subgroup::Left, Subgroup::Right] {
        let fit = ett_match(&sim.dataset, subgroup, &opts)?;
        let e = &fit.estimate;
        println!(
            "{subgroup}: ETT {:+.4} ({:+.4}, {:+.4}), {} treated matched, {} unmatched",
            e.estimate,
            e.lower,
            e.upper,
            e.n_treated,
            fit.matched.unmatched_treated
        );
        println!("  {:<34} {:>8} {:>8}", "covariate", "SMD all", "matched");
        for c in &fit.balance.covariates {
            println!("  {:<34} {:>8.4} {:>8.4}", c.name, c.smd_before, c.smd_after);
        }
    }
    println!("\ntrue ETT {:+.4}", sim.sample_ett());
    Ok(())
}
