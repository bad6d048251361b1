//! Odds-weighted ETT with a bootstrap percentile interval, then the same
//! estimate after dropping the top 5% of propensities.

use ettkit::scm::{generate, ScmConfig};
use ettkit::weighting::{ett_iptw, trim_against, BootstrapPlan, IptwOptions};
use ettkit::Subgroup;

fn main() -> ettkit::Result<()> {
    let sim = generate(&ScmConfig { seed: 3, ..ScmConfig::standard() })?;
    let opts = IptwOptions { bootstrap: BootstrapPlan { replicates: 500, seed: 3, ..Default::default() }, ..Default::default() };

    for subgroup in [Subgroup::Left, Subgroup::Right] {
        let fit = ett_iptw(&sim.dataset, subgroup, &opts)?;
        let e = &fit.estimate;
        println!(
            "{subgroup}: {:+.4} SE {:.4} ({:+.4}, {:+.4}), {} replicates, {} skipped",
            e.estimate,
            e.std_error,
            e.lower,
            e.upper,
            fit.bootstrap.replicates.len(),
            fit.bootstrap.skipped.len()
        );
        let trim = trim_against(&fit, &sim.dataset, subgroup, &opts, 95.0)?;
        println!(
            "  top 5% removed (p > {:.3}, {} rows): {:+.4} ({:+.4}, {:+.4})",
            trim.threshold, trim.n_dropped, trim.trimmed.estimate, trim.trimmed.lower, trim.trimmed.upper
        );
    }
    Ok(())
}
