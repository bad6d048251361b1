//! Logistic propensity model on the confounder design, with the overlap
//! summary used to check positivity.

use ettkit::design::{build_design, DesignSpec};
use ettkit::propensity::{fit_logistic, positivity_report};
use ettkit::scm::{generate, ScmConfig};

fn main() -> ettkit::Result<()> {
    let sim = generate(&ScmConfig { seed: 5, ..ScmConfig::standard() })?;
    let ds = &sim.dataset;
    let design = build_design(ds, &DesignSpec::confounders(true));
    let model = fit_logistic(&design, &ds.treatments())?;

    println!("converged in {} iterations", model.convergence.iterations);
    println!("{:<34} {:>9}", "term", "coef");
    println!("{:<34} {:>9.4}", "(intercept)", model.coefficients[0]);
    for (c, b) in model.manifest.iter().zip(&model.coefficients[1..]) {
        println!("{:<34} {:>9.4}", c.name, b);
    }

    let scores = model.linear_scores(&design)?;
    let years: Vec<i32> = ds.rows.iter().map(|r| r.key.game_year).collect();
    let overlap = positivity_report(&scores, &ds.treatments(), &years, 0.05);
    for y in &overlap.years {
        println!("{}  support [{:+.2}, {:+.2}]  flagged {}", y.year, y.support.0, y.support.1, y.flagged);
    }
    Ok(())
}
