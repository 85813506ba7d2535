//! File-level commands behind the `seroprev` binary.
//!
//! Every command that writes files also writes `<command>-manifest.toml`
//! next to its outputs, listing input hashes, the configuration, the seed
//! and output hashes. Outputs depend only on inputs, configuration and seed.

pub mod draws;
pub mod io;
pub mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_dataset, Dataset, Issue, PriorSpec, RawTables, ValidationOptions, ValidationReport};
use crate::inference::{
    count_above, participant_infection_probs, sensitivity_sweep, summarize_prevalence, InferenceError,
    ParameterDiagnostics, PrevalenceSummary, SensitivityGrid, DEFAULT_ESS_MIN, DEFAULT_RHAT_MAX,
};
use crate::rng::replication_rng;
use crate::sampler::{run_chains, ChainDraws, SamplerConfig, SamplerError};
use crate::simgen::{simulate_survey, SimError, TruthConfig};

use draws::{AcceptanceRecord, Column, DRAWS_FILE, METADATA_FILE};
use io::{read_file, write_file, InputPaths};
use report::{FileHash, ScopeReport};

pub const SUMMARY_FILE: &str = "summary.toml";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const PARTICIPANT_PROBS_CSV: &str = "participant_probs.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.toml";
pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
pub const SENSITIVITY_SVG: &str = "sensitivity.svg";
pub const TRUTH_FILE: &str = "truth.toml";
pub const TRUTH_CSV: &str = "truth_participants.csv";

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "SEROPREV_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "seroprev-out";

/// Probability above which a participant is counted as likely infected.
pub const LIKELY_INFECTED: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
    #[error("{file}: missing column '{column}'")]
    MissingColumn { file: String, column: String },
    #[error("{file} row {row}, column '{column}': {message}")]
    Cell {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Validation(#[from] ValidationReport),
    #[error("{path} changed since the fit (sha256 {actual}, recorded {recorded})")]
    InputChanged {
        path: String,
        recorded: String,
        actual: String,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

impl CliError {
    /// Process exit status: 1 for bad data or files, 2 for sampler faults,
    /// 64 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Sampler(_) => 2,
            _ => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Validation(r) => CliError::Validation(r),
            SimError::Sampler(s) => CliError::Sampler(s),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything a fit needs besides the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the four tables under their default names.
    pub data: Option<PathBuf>,
    pub participants: Option<PathBuf>,
    pub tracts: Option<PathBuf>,
    pub poststrat: Option<PathBuf>,
    pub nonresponse: Option<PathBuf>,
    pub validation: ValidationOptions,
    pub sampler: SamplerConfig,
    pub priors: PriorSpec,
    /// Prevalence ratios for the sensitivity sweep.
    pub lambdas: Vec<f64>,
    /// Credible level of reported intervals.
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            participants: None,
            tracts: None,
            poststrat: None,
            nonresponse: None,
            validation: ValidationOptions::default(),
            sampler: SamplerConfig::desk(),
            priors: PriorSpec::default(),
            lambdas: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            level: 0.95,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        parse_toml(path)
    }

    /// Input table locations; explicit paths override the data directory.
    pub fn inputs(&self) -> Result<InputPaths, CliError> {
        let base = self.data.as_deref().map(InputPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| CliError::Usage(format!("no {name} table given (set data or {name})")))
        };
        Ok(InputPaths {
            participants: pick(&self.participants, base.as_ref().map(|b| &b.participants), "participants")?,
            tracts: pick(&self.tracts, base.as_ref().map(|b| &b.tracts), "tracts")?,
            poststrat: pick(&self.poststrat, base.as_ref().map(|b| &b.poststrat), "poststrat")?,
            nonresponse: pick(&self.nonresponse, base.as_ref().map(|b| &b.nonresponse), "nonresponse")?,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.level > 0.0 && self.level < 1.0) {
            return usage(format!("level {} is outside (0, 1)", self.level));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return usage(format!("prevalence ratio {l} is not a nonnegative number"));
        }
        self.sampler.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.priors.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}

/// Sidecar describing a draws table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub software_version: String,
    pub seed: u64,
    pub level: f64,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub n_participants: usize,
    pub n_dropped: usize,
    pub regions: Vec<String>,
    pub sampled_tracts: Vec<String>,
    pub inputs: InputPaths,
    pub input_hashes: Vec<FileHash>,
    pub validation: ValidationOptions,
    pub sampler: SamplerConfig,
    pub priors: PriorSpec,
    pub lambdas: Vec<f64>,
    pub columns: Vec<Column>,
    pub acceptance: Vec<AcceptanceRecord>,
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOutcome {
    pub n_input: usize,
    pub n_included: usize,
    pub n_regions: usize,
    pub n_tracts: usize,
    pub n_sampled_tracts: usize,
    pub warnings: Vec<Issue>,
}

impl std::fmt::Display for ValidateOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "valid: {} of {} participants included; {} regions, {} tracts ({} sampled)",
            self.n_included, self.n_input, self.n_regions, self.n_tracts, self.n_sampled_tracts
        )?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn load(paths: &InputPaths, options: ValidationOptions) -> Result<(RawTables, crate::domain::Validated), CliError> {
    let raw = io::read_tables(paths)?;
    let v = validate_dataset(&raw, options)?;
    Ok((raw, v))
}

pub fn cmd_validate(paths: &InputPaths, options: ValidationOptions) -> Result<ValidateOutcome, CliError> {
    let (_, v) = load(paths, options)?;
    Ok(ValidateOutcome {
        n_input: v.n_input,
        n_included: v.dataset.n_participants(),
        n_regions: v.dataset.n_regions(),
        n_tracts: v.dataset.tracts.len(),
        n_sampled_tracts: v.dataset.n_sampled_tracts(),
        warnings: v.warnings,
    })
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub n_participants: usize,
    pub n_draws: usize,
    pub warnings: Vec<Issue>,
}

fn participant_ids(data: &Dataset) -> Vec<String> {
    data.participants.iter().map(|p| p.id.clone()).collect()
}

/// Fits the model and writes the draws table, its metadata and the
/// per-participant infection probabilities to `out`.
pub fn cmd_fit(config: &RunConfig, out: &Path) -> Result<FitOutcome, CliError> {
    config.validate()?;
    let paths = config.inputs()?;
    let (_, v) = load(&paths, config.validation)?;
    let data = v.dataset;
    let input_hashes = paths.all().iter().map(|p| FileHash::of(p)).collect::<Result<Vec<_>, _>>()?;
    log::info!(
        "fitting {} participants: {} chains of {} iterations",
        data.n_participants(),
        config.sampler.n_chains,
        config.sampler.n_iterations
    );
    let chains = run_chains(&config.sampler, &data, &config.priors)?;

    ensure_dir(out)?;
    let (regions, tracts) = draws::dataset_labels(&data);
    let columns = draws::columns(&regions, &tracts);
    write_file(&out.join(DRAWS_FILE), &draws::draws_csv(&chains, &columns))?;
    let probs = participant_infection_probs(chains.iter().flat_map(|c| &c.draws), &data);
    write_file(
        &out.join(PARTICIPANT_PROBS_CSV),
        &report::participant_probs_csv(&participant_ids(&data), &probs),
    )?;
    let meta = Metadata {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.sampler.seed,
        level: config.level,
        n_chains: chains.len(),
        draws_per_chain: config.sampler.draws_per_chain(),
        n_participants: data.n_participants(),
        n_dropped: v.n_input - data.n_participants(),
        regions,
        sampled_tracts: tracts,
        inputs: paths.clone(),
        input_hashes: input_hashes.clone(),
        validation: config.validation,
        sampler: config.sampler.clone(),
        priors: config.priors.clone(),
        lambdas: config.lambdas.clone(),
        columns,
        acceptance: chains
            .iter()
            .flat_map(|c| c.acceptance.iter().map(move |s| AcceptanceRecord::from_stats(c.chain, s)))
            .collect(),
    };
    write_file(&out.join(METADATA_FILE), report::to_toml(&meta)?.as_bytes())?;
    report::write_manifest(
        out,
        "fit",
        Some(config.sampler.seed),
        config,
        input_hashes,
        &[DRAWS_FILE, METADATA_FILE, PARTICIPANT_PROBS_CSV],
    )?;
    Ok(FitOutcome {
        n_participants: data.n_participants(),
        n_draws: chains.iter().map(|c| c.draws.len()).sum(),
        warnings: v.warnings,
    })
}

// ---------------------------------------------------------------------------
// Loading a fit back
// ---------------------------------------------------------------------------

/// A completed fit read back from disk.
pub struct FitArtifacts {
    pub metadata: Metadata,
    pub data: Dataset,
    pub chains: Vec<ChainDraws>,
    pub input_hashes: Vec<FileHash>,
}

/// Reads a fit directory. With `data_dir` the tables are taken from there
/// instead of the recorded paths. Their contents must match the recorded
/// hashes either way.
pub fn load_fit(draws_dir: &Path, data_dir: Option<&Path>) -> Result<FitArtifacts, CliError> {
    let metadata: Metadata = parse_toml(&draws_dir.join(METADATA_FILE))?;
    let paths = match data_dir {
        Some(d) => InputPaths::in_dir(d),
        None => metadata.inputs.clone(),
    };
    let hashes = paths.all().iter().map(|p| FileHash::of(p)).collect::<Result<Vec<_>, _>>()?;
    for (now, then) in hashes.iter().zip(&metadata.input_hashes) {
        if now.sha256 != then.sha256 {
            return Err(CliError::InputChanged {
                path: now.path.clone(),
                recorded: then.sha256.clone(),
                actual: now.sha256.clone(),
            });
        }
    }
    let (_, v) = load(&paths, metadata.validation)?;
    let chains = draws::read_draws(
        &draws_dir.join(DRAWS_FILE),
        metadata.regions.len(),
        metadata.sampled_tracts.len(),
    )?;
    Ok(FitArtifacts {
        metadata,
        data: v.dataset,
        chains,
        input_hashes: hashes,
    })
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantsReport {
    pub n: usize,
    pub threshold: f64,
    pub above_threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rhat_max: f64,
    pub ess_min: f64,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub level: f64,
    pub seed: u64,
    pub n_chains: usize,
    pub n_draws: usize,
    pub total_adults: f64,
    pub prevalence: Vec<ScopeReport>,
    pub participants: ParticipantsReport,
    pub convergence: ConvergenceReport,
    pub diagnostics: Vec<report::DiagnosticRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizeOutcome {
    pub summary: PrevalenceSummary,
    pub report: SummaryReport,
}

fn prevalence_summary(fit: &FitArtifacts, level: f64) -> Result<PrevalenceSummary, CliError> {
    let all: Vec<_> = fit.chains.iter().flat_map(|c| &c.draws).collect();
    let statewide: Vec<f64> = all.iter().map(|d| d.prevalence).collect();
    let regional: Vec<Vec<f64>> = (0..fit.data.n_regions())
        .map(|r| all.iter().map(|d| d.region_prevalence[r]).collect())
        .collect();
    let totals: Vec<f64> = (0..fit.data.n_regions()).map(|r| fit.data.poststrat.region_total(r)).collect();
    Ok(summarize_prevalence(
        &statewide,
        &regional,
        &fit.data.regions,
        &totals,
        fit.data.poststrat.total_population(),
        level,
    )?)
}

fn diagnostics(chains: &[ChainDraws]) -> Vec<report::DiagnosticRecord> {
    draws::SCALAR_PARAMETERS
        .iter()
        .map(|name| {
            let series: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.draws.iter().map(|d| draws::scalar_value(d, name)).collect())
                .collect();
            let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
            report::diagnostic_record(&ParameterDiagnostics::compute(name, &refs), DEFAULT_RHAT_MAX, DEFAULT_ESS_MIN)
        })
        .collect()
}

/// Summarizes a fit: prevalence, diagnostics and participant probabilities.
/// Reports go to `out`, which may be the fit directory itself.
pub fn cmd_summarize(draws_dir: &Path, data_dir: Option<&Path>, level: Option<f64>, out: &Path) -> Result<SummarizeOutcome, CliError> {
    let fit = load_fit(draws_dir, data_dir)?;
    let level = level.unwrap_or(fit.metadata.level);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Usage(format!("level {level} is outside (0, 1)")));
    }
    let summary = prevalence_summary(&fit, level)?;
    let diags = diagnostics(&fit.chains);
    let probs = participant_infection_probs(fit.chains.iter().flat_map(|c| &c.draws), &fit.data);
    let rep = SummaryReport {
        level,
        seed: fit.metadata.seed,
        n_chains: fit.chains.len(),
        n_draws: summary.n_draws,
        total_adults: fit.data.poststrat.total_population(),
        prevalence: report::scope_reports(&summary),
        participants: ParticipantsReport {
            n: probs.len(),
            threshold: LIKELY_INFECTED,
            above_threshold: count_above(&probs, LIKELY_INFECTED),
        },
        convergence: ConvergenceReport {
            rhat_max: DEFAULT_RHAT_MAX,
            ess_min: DEFAULT_ESS_MIN,
            all_converged: diags.iter().all(|d| d.converged),
        },
        diagnostics: diags,
    };
    ensure_dir(out)?;
    write_file(&out.join(SUMMARY_FILE), report::to_toml(&rep)?.as_bytes())?;
    write_file(&out.join(SUMMARY_CSV), &report::summary_csv(&summary))?;
    write_file(&out.join(DIAGNOSTICS_CSV), &report::diagnostics_csv(&rep.diagnostics))?;
    write_file(
        &out.join(PARTICIPANT_PROBS_CSV),
        &report::participant_probs_csv(&participant_ids(&fit.data), &probs),
    )?;
    let mut inputs = fit.input_hashes.clone();
    inputs.push(FileHash::of(&draws_dir.join(DRAWS_FILE))?);
    #[derive(Serialize)]
    struct Echo<'a> {
        draws: &'a Path,
        level: f64,
    }
    report::write_manifest(
        out,
        "summarize",
        Some(fit.metadata.seed),
        &Echo { draws: draws_dir, level },
        inputs,
        &[SUMMARY_FILE, SUMMARY_CSV, DIAGNOSTICS_CSV, PARTICIPANT_PROBS_CSV],
    )?;
    Ok(SummarizeOutcome { summary, report: rep })
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityLambda {
    pub lambda: f64,
    pub prevalence: Vec<ScopeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub level: f64,
    pub n_draws: usize,
    pub rates: Vec<f64>,
    pub entries: Vec<SensitivityLambda>,
}

/// Non-response sensitivity sweep over `lambdas` (the fit's grid when
/// `None`), optionally with non-response rates from another table.
pub fn cmd_sensitivity(
    draws_dir: &Path,
    data_dir: Option<&Path>,
    rates_file: Option<&Path>,
    lambdas: Option<&[f64]>,
    level: Option<f64>,
    out: &Path,
) -> Result<SensitivityGrid, CliError> {
    let fit = load_fit(draws_dir, data_dir)?;
    let level = level.unwrap_or(fit.metadata.level);
    let lambdas = lambdas.map(|l| l.to_vec()).unwrap_or_else(|| fit.metadata.lambdas.clone());
    if lambdas.is_empty() {
        return Err(CliError::Usage("the prevalence-ratio grid is empty".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(CliError::Usage(format!("prevalence ratio {l} is not a nonnegative number")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Usage(format!("level {level} is outside (0, 1)")));
    }
    let mut inputs = fit.input_hashes.clone();
    let rates = match rates_file {
        None => fit.data.nonresponse.rates().to_vec(),
        Some(path) => {
            inputs.push(FileHash::of(path)?);
            let rows = io::read_nonresponse(path)?;
            fit.data
                .regions
                .iter()
                .map(|r| {
                    rows.iter()
                        .find(|row| &row.region == r)
                        .map(|row| row.rate)
                        .filter(|x| (0.0..=1.0).contains(x))
                        .ok_or_else(|| CliError::Usage(format!("{}: no valid rate for region {r}", path.display())))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let grid = sensitivity_sweep(
        &fit.chains,
        &fit.data,
        &rates,
        &lambdas,
        level,
        fit.metadata.seed,
        fit.metadata.sampler.unsampled_tracts,
    )?;
    let rep = SensitivityReport {
        level,
        n_draws: grid.entries.first().map_or(0, |e| e.summary.n_draws),
        rates: rates.clone(),
        entries: grid
            .entries
            .iter()
            .map(|e| SensitivityLambda {
                lambda: e.lambda,
                prevalence: report::scope_reports(&e.summary),
            })
            .collect(),
    };
    ensure_dir(out)?;
    write_file(&out.join(SENSITIVITY_FILE), report::to_toml(&rep)?.as_bytes())?;
    write_file(&out.join(SENSITIVITY_CSV), &report::sensitivity_csv(&grid))?;
    write_file(&out.join(SENSITIVITY_SVG), report::sensitivity_svg(&grid).as_bytes())?;
    inputs.push(FileHash::of(&draws_dir.join(DRAWS_FILE))?);
    #[derive(Serialize)]
    struct Echo<'a> {
        draws: &'a Path,
        level: f64,
        lambdas: &'a [f64],
        rates: &'a [f64],
    }
    report::write_manifest(
        out,
        "sensitivity",
        Some(fit.metadata.seed),
        &Echo {
            draws: draws_dir,
            level,
            lambdas: &lambdas,
            rates: &rates,
        },
        inputs,
        &[SENSITIVITY_FILE, SENSITIVITY_CSV, SENSITIVITY_SVG],
    )?;
    Ok(grid)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub seed: u64,
    pub prevalence: f64,
    pub region_prevalence: Vec<f64>,
    pub alpha_region: Vec<f64>,
    pub n_participants: usize,
    pub truth: TruthConfig,
}

/// Simulates a survey from the truth in `truth_path` (defaults when `None`)
/// and writes the four input tables plus the truth to `out`. Uses
/// replication stream 0 of `seed`.
pub fn cmd_simulate(truth_path: Option<&Path>, seed: u64, out: &Path) -> Result<InputPaths, CliError> {
    let truth: TruthConfig = match truth_path {
        Some(p) => parse_toml(p)?,
        None => TruthConfig::default(),
    };
    truth.validate()?;
    let mut rng = replication_rng(seed, 0);
    let sim = simulate_survey(&truth, &mut rng)?;
    log::info!("simulated {} participants", sim.raw.participants.len());
    ensure_dir(out)?;
    let paths = io::write_tables(out, &sim.raw)?;
    let rep = TruthReport {
        seed,
        prevalence: sim.truth.prevalence,
        region_prevalence: sim.truth.region_prevalence.clone(),
        alpha_region: sim.truth.alpha_region.clone(),
        n_participants: sim.raw.participants.len(),
        truth: truth.clone(),
    };
    write_file(&out.join(TRUTH_FILE), report::to_toml(&rep)?.as_bytes())?;
    let ids: Vec<String> = sim.raw.participants.iter().map(|p| p.id.clone()).collect();
    let infected: Vec<f64> = sim.truth.infected.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    write_file(&out.join(TRUTH_CSV), &report::participant_probs_csv(&ids, &infected))?;
    let inputs = match truth_path {
        Some(p) => vec![FileHash::of(p)?],
        None => Vec::new(),
    };
    report::write_manifest(
        out,
        "simulate",
        Some(seed),
        &truth,
        inputs,
        &[
            io::PARTICIPANTS_FILE,
            io::TRACTS_FILE,
            io::POSTSTRAT_FILE,
            io::NONRESPONSE_FILE,
            TRUTH_FILE,
            TRUTH_CSV,
        ],
    )?;
    Ok(paths)
}

/// Output directory from a flag, else the environment, else the default.
pub fn resolve_output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}
