//! Pitch-level CSV to analysis table: write a synthetic pitch log in the
//! Statcast column layout, read it back and run the exclusion cascade.

use ettkit::ingest::{ingest, read_pitches, synthetic_pitches, write_pitches, IngestConfig, SynthConfig};

fn main() -> ettkit::Result<()> {
    let dir = std::env::temp_dir().join("ettkit-ingest-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("pitches.csv");

    let cfg = SynthConfig { seed: 11, ..Default::default() };
    write_pitches(&synthetic_pitches(&cfg), &path)?;
    let pitches = read_pitches(&path)?;
    println!("{} pitches read from {}", pitches.len(), path.display());

    let (ds, ledger) = ingest(pitches, &IngestConfig::default())?;
    for stage in &ledger.stages {
        println!("{:>7}  {}", stage.remaining, stage.rule);
    }
    println!("\n{} rows, {} shifted, {} covariates", ds.len(), ds.n_treated(), ds.covariate_names.len());

    ds.write_csv(&dir.join("analysis.csv"))?;
    ledger.write_json(&dir.join("exclusion_ledger.json"))?;
    Ok(())
}
