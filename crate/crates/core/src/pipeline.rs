//! The simulate, ingest, estimate and diagnose commands.
//!
//! Every command reads a [`RunConfig`] and writes its outputs under
//! `output_dir`. Output files depend only on the config and the input, never
//! on the number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisDataset;
use crate::design::{build_design, CovariateSelection, DesignSpec};
use crate::error::{Error, Result};
use crate::estimate::{EttEstimate, Method, Subgroup};
use crate::ingest::{ingest, read_pitches, synthetic_pitches, write_pitches, ExclusionLedger, IngestConfig, SynthConfig};
use crate::iv::{ett_iv, instrument_diagnostics, InstrumentReport, IvSpec};
use crate::matching::{ett_match, MatchOptions};
use crate::propensity::{positivity_report, PositivityReport};
use crate::scm::{confounding_bias, generate, marginals, true_ett, MarginalsReport, ScmConfig, TrueEtt};
use crate::weighting::{ett_iptw, trim_against, write_trim_table, IptwOptions};

pub const RESULTS_SCHEMA: &str = "ettkit.results.v1";

/// Units drawn for the confounding-bias projection.
pub const BIAS_MC_UNITS: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelector {
    Match,
    Iptw,
    Iv,
    #[default]
    All,
}

impl MethodSelector {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelector::Match => vec![Method::Matching],
            MethodSelector::Iptw => vec![Method::Iptw],
            MethodSelector::Iv => vec![Method::Iv],
            MethodSelector::All => vec![Method::Matching, Method::Iptw, Method::Iv],
        }
    }
}

impl FromStr for MethodSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "match" | "matching" => Ok(Self::Match),
            "iptw" => Ok(Self::Iptw),
            "iv" => Ok(Self::Iv),
            "all" => Ok(Self::All),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}` (expected match, iptw, iv or all)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SubgroupSelector {
    L,
    R,
    #[default]
    #[serde(rename = "both")]
    Both,
    #[serde(rename = "pooled")]
    Pooled,
}

impl SubgroupSelector {
    pub fn subgroups(self) -> Vec<Subgroup> {
        match self {
            SubgroupSelector::L => vec![Subgroup::Left],
            SubgroupSelector::R => vec![Subgroup::Right],
            SubgroupSelector::Both => vec![Subgroup::Left, Subgroup::Right],
            SubgroupSelector::Pooled => vec![Subgroup::Pooled],
        }
    }
}

impl FromStr for SubgroupSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "lh" | "left" => Ok(Self::L),
            "r" | "rh" | "right" => Ok(Self::R),
            "both" => Ok(Self::Both),
            "pooled" | "all" => Ok(Self::Pooled),
            other => Err(Error::InvalidConfig(format!("unknown subgroup `{other}` (expected L, R, both or pooled)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub method: MethodSelector,
    pub subgroup: SubgroupSelector,
    pub seed: Option<u64>,
    /// Worker cap; outputs never depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub matching: MatchOptions,
    pub iptw: IptwOptions,
    pub iv: IvSpec,
    /// Percentile for the IPTW trimming table; `None` skips it.
    pub trim_percentile: Option<f64>,
    pub positivity_flag_fraction: f64,
    /// Covariates whose eta squared across instrument tertiles exceeds this
    /// are flagged.
    pub instrument_eta_threshold: f64,
    /// Simulator settings: an optional `preset` plus overrides.
    pub simulate: Option<toml::Table>,
    pub ingest: IngestConfig,
    /// Generate a pitch log instead of reading `input`.
    pub synthetic: Option<SynthConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("ettkit-out"),
            method: MethodSelector::All,
            subgroup: SubgroupSelector::Both,
            seed: None,
            threads: None,
            matching: MatchOptions::default(),
            iptw: IptwOptions::default(),
            iv: IvSpec::default(),
            trim_percentile: Some(95.0),
            positivity_flag_fraction: 0.05,
            instrument_eta_threshold: 0.01,
            simulate: None,
            ingest: IngestConfig::default(),
            synthetic: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading config {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("parsing config {}", path.display())))
    }

    pub fn require_seed(&self, why: &str) -> Result<u64> {
        self.seed.ok_or_else(|| Error::InvalidConfig(format!("--seed is required for {why}")))
    }

    fn require_input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| Error::InvalidConfig("--input is required".into()))
    }

    /// Simulator config: the `simulate` table if given, else the standard
    /// preset, with the run seed.
    pub fn scm_config(&self) -> Result<ScmConfig> {
        let seed = self.require_seed("simulate")?;
        let mut cfg = match &self.simulate {
            Some(t) => ScmConfig::from_toml(&toml::to_string(t).map_err(|e| Error::InvalidConfig(e.to_string()))?)?,
            None => ScmConfig::standard(),
        };
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)
            .map_err(|e| Error::from(e).context(format!("creating output directory {}", self.output_dir.display())))
    }
}

/// Dataset in CSV or, for a `.bin` extension, the binary cache.
pub fn read_dataset(path: &Path) -> Result<AnalysisDataset> {
    let ds = if path.extension().is_some_and(|e| e == "bin") {
        AnalysisDataset::read_binary(path)
    } else {
        AnalysisDataset::read_csv(path)
    };
    ds.map_err(|e| e.context(format!("reading dataset {}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_ett: TrueEtt,
    /// Mean of y1 - y0 over the treated rows actually drawn.
    pub sample_ett: f64,
    pub n_units: usize,
    pub n_treated: usize,
    /// Bias of a regression adjustment on the measured confounders.
    pub regression_bias: f64,
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub dataset: PathBuf,
    pub ground_truth: GroundTruth,
    pub marginals: MarginalsReport,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let scm = cfg.scm_config()?;
    cfg.prepare_output()?;
    let sim = generate(&scm)?;
    let truth = true_ett(&scm)?;
    let latent = scm.outcome.u_strength != 0.0 || scm.outcome.exclusion_violation != 0.0;
    let regression_bias = if latent { confounding_bias(&scm, BIAS_MC_UNITS)?.bias } else { 0.0 };
    let ground_truth = GroundTruth {
        true_ett: truth,
        sample_ett: sim.sample_ett(),
        n_units: sim.dataset.len(),
        n_treated: sim.dataset.n_treated(),
        regression_bias,
    };
    let report = marginals(&sim);

    let dataset = cfg.out("dataset.csv");
    sim.dataset.write_csv(&dataset)?;
    sim.write_potential_outcomes(&cfg.out("potential_outcomes.csv"))?;
    write_json(&cfg.out("ground_truth.json"), &ground_truth)?;
    write_json(&cfg.out("marginals.json"), &report)?;
    fs::write(cfg.out("scm_config.toml"), scm.to_toml()?)?;
    Ok(SimulateOutput { dataset, ground_truth, marginals: report })
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<(AnalysisDataset, ExclusionLedger)> {
    cfg.prepare_output()?;
    let pitches = match &cfg.synthetic {
        Some(s) => {
            let s = SynthConfig { seed: cfg.require_seed("synthetic pitch logs")?, ..s.clone() };
            let p = synthetic_pitches(&s);
            write_pitches(&p, &cfg.out("pitches.csv"))?;
            p
        }
        None => {
            let path = cfg.require_input()?;
            read_pitches(path).map_err(|e| e.context(format!("reading pitches {}", path.display())))?
        }
    };
    let (ds, ledger) = ingest(pitches, &cfg.ingest)?;
    ds.write_csv(&cfg.out("analysis.csv"))?;
    ds.write_binary(&cfg.out("analysis.bin"))?;
    ledger.write_json(&cfg.out("exclusion_ledger.json"))?;
    Ok((ds, ledger))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub n_treated: usize,
    pub years: Vec<i32>,
    pub covariates: Vec<String>,
}

impl DatasetSummary {
    fn of(ds: &AnalysisDataset) -> Self {
        Self { rows: ds.len(), n_treated: ds.n_treated(), years: ds.years(), covariates: ds.covariate_names.clone() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResults {
    pub schema_version: String,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub estimates: Vec<EttEstimate>,
}

fn annotate<T>(r: Result<T>, method: Method, subgroup: Subgroup) -> Result<T> {
    r.map_err(|e| e.context(format!("{method} / {subgroup}")))
}

fn tag(subgroup: Subgroup) -> String {
    subgroup.to_string().to_ascii_lowercase()
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<EstimateResults> {
    let methods = cfg.method.methods();
    let needs_seed = methods.iter().any(|m| *m != Method::Matching);
    let seed = if needs_seed { cfg.require_seed("bootstrap intervals")? } else { cfg.seed.unwrap_or(0) };
    let ds = read_dataset(cfg.require_input()?)?;
    cfg.prepare_output()?;

    let iptw = IptwOptions { bootstrap: crate::weighting::BootstrapPlan { seed, ..cfg.iptw.bootstrap.clone() }, ..cfg.iptw.clone() };
    let iv = IvSpec { bootstrap: crate::weighting::BootstrapPlan { seed, ..cfg.iv.bootstrap.clone() }, ..cfg.iv.clone() };

    let mut estimates = Vec::new();
    let mut trims = Vec::new();
    for &method in &methods {
        for subgroup in cfg.subgroup.subgroups() {
            let est = match method {
                Method::Matching => annotate(ett_match(&ds, subgroup, &cfg.matching), method, subgroup)?.estimate,
                Method::Iptw => {
                    let fit = annotate(ett_iptw(&ds, subgroup, &iptw), method, subgroup)?;
                    fit.bootstrap.write_csv(&cfg.out(&format!("bootstrap_iptw_{}.csv", tag(subgroup))))?;
                    if let Some(p) = cfg.trim_percentile {
                        trims.push(annotate(trim_against(&fit, &ds, subgroup, &iptw, p), method, subgroup)?);
                    }
                    fit.estimate
                }
                Method::Iv => {
                    let fit = annotate(ett_iv(&ds, subgroup, &iv), method, subgroup)?;
                    fit.bootstrap.write_csv(&cfg.out(&format!("bootstrap_iv_{}.csv", tag(subgroup))))?;
                    fit.write_strata_csv(&cfg.out(&format!("iv_strata_{}.csv", tag(subgroup))))?;
                    fit.estimate
                }
            };
            estimates.push(est);
        }
    }
    if !trims.is_empty() {
        write_trim_table(&trims, &cfg.out("trim_sensitivity.csv"))?;
    }
    write_forest_csv(&estimates, &cfg.out("estimates.csv"))?;
    let results = EstimateResults {
        schema_version: RESULTS_SCHEMA.into(),
        config: cfg.clone(),
        dataset: DatasetSummary::of(&ds),
        estimates,
    };
    write_json(&cfg.out("results.json"), &results)?;
    Ok(results)
}

/// One row per estimate: method, subgroup, estimate, lower, upper.
pub fn write_forest_csv(estimates: &[EttEstimate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "subgroup", "estimate", "lower", "upper"])?;
    for e in estimates {
        w.write_record([
            e.method.to_string(),
            e.subgroup.to_string(),
            crate::dataset::fmt_f64(e.estimate),
            crate::dataset::fmt_f64(e.lower),
            crate::dataset::fmt_f64(e.upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupDiagnostics {
    pub subgroup: Subgroup,
    pub max_abs_smd_before: f64,
    pub max_abs_smd_after: f64,
    pub imbalanced: Vec<String>,
    pub positivity: PositivityReport,
    pub instrument: InstrumentReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseResults {
    pub schema_version: String,
    pub dataset: DatasetSummary,
    pub subgroups: Vec<SubgroupDiagnostics>,
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<DiagnoseResults> {
    let ds = read_dataset(cfg.require_input()?)?;
    cfg.prepare_output()?;
    let mut subgroups = Vec::new();
    for subgroup in cfg.subgroup.subgroups() {
        let fit = annotate(ett_match(&ds, subgroup, &cfg.matching), Method::Matching, subgroup)?;
        fit.balance.write_csv(&cfg.out(&format!("balance_{}.csv", tag(subgroup))))?;

        let sub = subgroup.select(&ds);
        let years: Vec<i32> = sub.rows.iter().map(|r| r.key.game_year).collect();
        let positivity = positivity_report(&fit.scores, &sub.treatments(), &years, cfg.positivity_flag_fraction);

        let covariates = build_design(
            &sub,
            &DesignSpec { covariates: CovariateSelection::All, p_throws: false, stand: false, year_indicators: false },
        );
        let z: Vec<f64> = sub.rows.iter().map(|r| r.instrument.rate).collect();
        let instrument = instrument_diagnostics(&z, &covariates.matrix, cfg.instrument_eta_threshold);

        subgroups.push(SubgroupDiagnostics {
            subgroup,
            max_abs_smd_before: fit.balance.max_abs_smd_before(),
            max_abs_smd_after: fit.balance.max_abs_smd_after(),
            imbalanced: fit.balance.imbalanced().into_iter().map(String::from).collect(),
            positivity,
            instrument,
        });
    }
    let results = DiagnoseResults { schema_version: RESULTS_SCHEMA.into(), dataset: DatasetSummary::of(&ds), subgroups };
    write_json(&cfg.out("diagnostics.json"), &results)?;
    Ok(results)
}
