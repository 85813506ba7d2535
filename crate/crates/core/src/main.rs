use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seroprev::cli::{
    cmd_fit, cmd_sensitivity, cmd_simulate, cmd_summarize, cmd_validate, io::InputPaths, resolve_output_dir, CliError,
    RunConfig, OUTPUT_ENV,
};
use seroprev::domain::{InclusionPolicy, ValidationOptions};
use seroprev::sampler::LikelihoodVariant;

#[derive(Parser)]
#[command(name = "seroprev", version, about = "Seroprevalence from imperfect antibody tests in a cluster survey")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory with participants.csv, tracts.csv, poststrat.csv and nonresponse.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    participants: Option<PathBuf>,
    #[arg(long)]
    tracts: Option<PathBuf>,
    #[arg(long)]
    poststrat: Option<PathBuf>,
    #[arg(long)]
    nonresponse: Option<PathBuf>,
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data = self.data.clone();
        }
        for (flag, slot) in [
            (&self.participants, &mut cfg.participants),
            (&self.tracts, &mut cfg.tracts),
            (&self.poststrat, &mut cfg.poststrat),
            (&self.nonresponse, &mut cfg.nonresponse),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the input tables and report what would be analyzed.
    Validate {
        #[command(flatten)]
        data: DataArgs,
        /// Reject participants lacking test results or demographics instead of dropping them.
        #[arg(long)]
        strict: bool,
    },
    /// Fit the model and write posterior draws.
    Fit {
        /// Run configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Ignore test results (prior predictive check).
        #[arg(long)]
        prior_only: bool,
    },
    /// Summarize a fit: prevalence, diagnostics and participant probabilities.
    Summarize {
        /// Directory written by `fit`.
        #[arg(long)]
        draws: PathBuf,
        /// Read input tables from here instead of the recorded paths.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
        /// Defaults to the draws directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Non-response sensitivity sweep over prevalence ratios.
    Sensitivity {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated prevalence ratios; defaults to the fit's grid.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Non-response table overriding the fitted one.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a survey and write it as input tables.
    Simulate {
        /// Truth configuration (TOML); defaults are used when absent.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { data, strict } => {
            let mut cfg = RunConfig::default();
            data.apply(&mut cfg);
            let paths: InputPaths = cfg.inputs()?;
            let options = ValidationOptions {
                inclusion: if strict { InclusionPolicy::Strict } else { InclusionPolicy::Drop },
                ..Default::default()
            };
            print!("{}", cmd_validate(&paths, options)?);
        }
        Command::Fit {
            config,
            data,
            out,
            seed,
            chains,
            iterations,
            burnin,
            thin,
            prior_only,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::from_file(&p)?,
                None => RunConfig::default(),
            };
            data.apply(&mut cfg);
            let s = &mut cfg.sampler;
            s.seed = seed.unwrap_or(s.seed);
            s.n_chains = chains.unwrap_or(s.n_chains);
            s.n_iterations = iterations.unwrap_or(s.n_iterations);
            s.n_burnin = burnin.unwrap_or(s.n_burnin);
            s.thin = thin.unwrap_or(s.thin);
            if prior_only {
                if s.likelihood == LikelihoodVariant::IgnoreCovariance {
                    return Err(CliError::Usage("--prior-only conflicts with the configured likelihood".into()));
                }
                s.likelihood = LikelihoodVariant::PriorOnly;
            }
            let out = resolve_output_dir(out);
            let o = cmd_fit(&cfg, &out)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "fit {} participants, {} draws written to {}",
                o.n_participants,
                o.n_draws,
                out.display()
            );
        }
        Command::Summarize { draws, data, level, out } => {
            let out = out.unwrap_or_else(|| draws.clone());
            let s = cmd_summarize(&draws, data.as_deref(), level, &out)?;
            let p = &s.summary;
            println!(
                "prevalence {:.4} ({:.0}% HPD {:.4} to {:.4}), about {:.0} adults",
                p.mean,
                p.level * 100.0,
                p.hpd.0,
                p.hpd.1,
                p.adults
            );
            println!(
                "{} of {} participants above {} probability of past infection",
                s.report.participants.above_threshold, s.report.participants.n, s.report.participants.threshold
            );
            if !s.report.convergence.all_converged {
                eprintln!("warning: some parameters miss the R-hat or ESS thresholds; see diagnostics.csv");
            }
        }
        Command::Sensitivity {
            draws,
            data,
            lambdas,
            rates,
            level,
            out,
        } => {
            let out = out.unwrap_or_else(|| draws.clone());
            let grid = cmd_sensitivity(&draws, data.as_deref(), rates.as_deref(), lambdas.as_deref(), level, &out)?;
            for e in &grid.entries {
                println!(
                    "lambda {}: prevalence {:.4} ({:.4} to {:.4})",
                    e.lambda, e.summary.mean, e.summary.hpd.0, e.summary.hpd.1
                );
            }
        }
        Command::Simulate { truth, seed, out } => {
            let out = resolve_output_dir(out);
            cmd_simulate(truth.as_deref(), seed, &out)?;
            println!("simulated survey written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
