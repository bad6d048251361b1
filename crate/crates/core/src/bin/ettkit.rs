use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ettkit::pipeline::{cmd_diagnose, cmd_estimate, cmd_ingest, cmd_simulate, RunConfig};
use ettkit::Error;

#[derive(Parser)]
#[command(name = "ettkit", version, about = "Effect of treatment on the treated from plate-appearance data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Dataset (estimate, diagnose) or pitch CSV (ingest).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// match, iptw, iv or all.
    #[arg(long, global = true)]
    method: Option<String>,
    /// L, R, both or pooled.
    #[arg(long, global = true)]
    subgroup: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Falls back to the config file, then ETTKIT_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML run config. Explicit flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset and its ground truth from the structural model.
    Simulate {
        /// standard, table2_calibrated or unmeasured_confounding.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        n_units: Option<usize>,
    },
    /// Build the analysis table from pitch-level data.
    Ingest {
        /// Generate a synthetic pitch log instead of reading --input.
        #[arg(long)]
        synthetic: bool,
    },
    /// Run the estimators and write results.
    Estimate,
    /// Balance, overlap and instrument reports.
    Diagnose,
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &c.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &c.method {
        cfg.method = v.parse()?;
    }
    if let Some(v) = &c.subgroup {
        cfg.subgroup = v.parse()?;
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    if cfg.threads.is_none() {
        if let Ok(v) = std::env::var("ETTKIT_THREADS") {
            let n = v.trim().parse().map_err(|_| Error::InvalidConfig(format!("ETTKIT_THREADS must be a positive integer, got `{v}`")))?;
            cfg.threads = Some(n);
        }
    }
    if cfg.threads == Some(0) {
        return Err(Error::InvalidConfig("--threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate { preset, n_units } => {
            let table = cfg.simulate.get_or_insert_with(toml::Table::new);
            if let Some(p) = preset {
                table.insert("preset".into(), toml::Value::String(p.clone()));
            }
            if let Some(n) = n_units {
                table.insert("n_units".into(), toml::Value::Integer(*n as i64));
            }
        }
        Command::Ingest { synthetic: true } if cfg.synthetic.is_none() => cfg.synthetic = Some(Default::default()),
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<String, Error> {
    match cli.command {
        Command::Simulate { .. } => {
            let out = cmd_simulate(cfg)?;
            Ok(format!(
                "wrote {} ({} rows, {} treated); true ETT {:.6}",
                out.dataset.display(),
                out.ground_truth.n_units,
                out.ground_truth.n_treated,
                out.ground_truth.true_ett.value
            ))
        }
        Command::Ingest { .. } => {
            let (ds, ledger) = cmd_ingest(cfg)?;
            Ok(format!("{} plate appearances after {} exclusion stages", ds.len(), ledger.stages.len() - 1))
        }
        Command::Estimate => {
            let res = cmd_estimate(cfg)?;
            Ok(res
                .estimates
                .iter()
                .map(|e| format!("{:<9} {:<6} {:+.5} ({:+.5}, {:+.5})", e.method, e.subgroup, e.estimate, e.lower, e.upper))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Diagnose => {
            let res = cmd_diagnose(cfg)?;
            Ok(res
                .subgroups
                .iter()
                .map(|s| format!("{:<6} max |SMD| {:.4} -> {:.4}", s.subgroup, s.max_abs_smd_before, s.max_abs_smd_after))
                .collect::<Vec<_>>()
                .join("\n"))
        }
    }
}

fn report(e: &Error) -> ExitCode {
    let mut root = e;
    while let Error::Annotated { source, .. } = root {
        root = source;
    }
    let debug = format!("{root:?}");
    let kind = debug.split(['(', ' ', '{']).next().unwrap_or("Error");
    let doc = serde_json::json!({ "status": "error", "kind": kind, "message": e.to_string() });
    eprintln!("{doc}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return report(&Error::from(e)),
    };
    match pool.install(|| run(&cli, &cfg)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
