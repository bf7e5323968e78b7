use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use byzvr::aggregation::certify;
use byzvr::harness::{self, CertifyConfig, Experiment, RunConfig};
use byzvr::theory;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzvr", version, about = "Byzantine-robust distributed optimization simulator")]
struct Cli {
    /// Worker threads for parallel runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (positional form).
    path: Option<PathBuf>,
    /// Config file.
    #[arg(long = "config")]
    config: Option<PathBuf>,
    /// Replace a config key, e.g. `--override attack=alie`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn path(&self) -> anyhow::Result<PathBuf> {
        self.config
            .clone()
            .or_else(|| self.path.clone())
            .ok_or_else(|| anyhow!(byzvr::Error::Config(vec!["no config file given".into()])))
    }

    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let overrides = self
            .overrides
            .iter()
            .map(|o| harness::parse_override(o))
            .collect::<Result<Vec<_>, _>>()?;
        let text = read_config(&self.path()?)?;
        Ok(RunConfig::from_toml_str(&text, &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every (gamma, seed) cell and write traces plus summary.json.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (defaults to the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the reference optimum of a config's problem.
    Fstar {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Empirical robustness audit of an aggregator.
    CertifyAggregator {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate the closed-form constants and step-size bounds.
    Theory {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also predict rounds to reach this accuracy.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Initial gap `f(x0) - f*` used by the prediction.
        #[arg(long, default_value_t = 1.0)]
        gap0: f64,
        /// Initial `||g0 - grad f(x0)||^2` used by the prediction.
        #[arg(long, default_value_t = 0.0)]
        gdist0: f64,
        /// Samples per worker used for oracle-call predictions.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
}

/// Exit status for a failed run: configuration problems map to 2.
fn failure_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<byzvr::Error>() {
        Some(byzvr::Error::Config(_)) => 2,
        _ => 1,
    }
}

/// Reads a config document; an unreadable file is a configuration error.
fn read_config(path: &PathBuf) -> anyhow::Result<String> {
    harness::read_text(path).map_err(|e| anyhow!(byzvr::Error::Config(vec![e.to_string()])))
}

/// Prints a JSON document; a closed pipe (`| head`) is not an error.
fn emit(json: String) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{json}") {
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run { config, out } => {
            let cfg = config.run_config()?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            let summary = harness::run(&cfg, &out)?;
            emit(serde_json::to_string_pretty(&summary)?)?;
            if summary.all_diverged() {
                eprintln!("every step size diverged");
                return Ok(3);
            }
        }
        Command::Fstar { config } => {
            let cfg = config.run_config()?;
            let exp = Experiment::build(&cfg)?;
            emit(serde_json::to_string_pretty(&exp.fstar)?)?;
        }
        Command::CertifyAggregator { config } => {
            let path = config.path()?;
            let spec = CertifyConfig::from_toml_str(&read_config(&path)?)?;
            let report = certify(&spec.aggregator(), &spec.spec())?;
            emit(serde_json::to_string_pretty(&report)?)?;
        }
        Command::Theory { config, epsilon, gap0, gdist0, m } => {
            let path = config.path()?;
            let inputs = harness::theory_inputs_from_toml(&read_config(&path)?)?;
            let outputs = theory::evaluate(&inputs)?;
            let mut doc = serde_json::json!({ "outputs": outputs });
            if let Some(eps) = epsilon {
                doc["prediction"] = serde_json::to_value(theory::predict_rounds(&inputs, eps, gap0, gdist0, m)?)?;
            }
            emit(serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(failure_code(&err))
        }
    }
}
