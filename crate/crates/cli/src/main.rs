use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ssm_core::registry;
use ssm_core::SsmError;

mod commands;
mod config;
mod output;

use config::RunConfig;
use output::{Format, Provenance, Sink};

/// Derives and evaluates probabilistic surrogate safety measures.
#[derive(Debug, Parser)]
#[command(name = "ssm", version)]
struct Cli {
    /// TOML (or `.json`) run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides `root_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads; all cores by default. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress (-v) or per-point detail (-vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract interaction episodes and situation pairs from trajectories.
    /// Without a file, a synthetic fleet is generated from the config.
    Ingest { trajectories: Option<PathBuf> },

    /// Estimate crash probabilities at design points and write the table.
    Derive {
        /// Situation pairs from `ingest`; needed by models that sample
        /// leader futures and by cover designs.
        pairs: Option<PathBuf>,
        /// Conflict model name; overrides the config.
        #[arg(long)]
        model: Option<String>,
        /// Estimator name; overrides the config.
        #[arg(long)]
        estimator: Option<String>,
    },

    /// Evaluate a table at every row of a query CSV.
    Evaluate { table: PathBuf, queries: PathBuf },

    /// Derive closing-speed tables at each configured tolerance and compare
    /// them with the closed-form measure.
    ReplicateWs,

    /// Summarize the partial derivatives of a five-input table.
    Benchmark { table: PathBuf },

    /// Evaluate a table along a scripted two-vehicle scenario.
    SimulateScenario { scenario: PathBuf, table: PathBuf },

    /// Draw leader speed profiles for one initial state.
    SampleFutures {
        /// Future model from `derive`, or a pairs CSV to fit one from.
        source: PathBuf,
        #[arg(long)]
        v_lead: Option<f64>,
        #[arg(long)]
        a_lead: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Derive { .. } => "derive",
            Command::Evaluate { .. } => "evaluate",
            Command::ReplicateWs => "replicate-ws",
            Command::Benchmark { .. } => "benchmark",
            Command::SimulateScenario { .. } => "simulate-scenario",
            Command::SampleFutures { .. } => "sample-futures",
        }
    }
}

/// Bad input data or configuration; exits with status 2.
#[derive(Debug)]
pub struct InputError(String);

impl InputError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn is_input_error(e: &SsmError) -> bool {
    match e {
        SsmError::DesignPoint { source, .. } => is_input_error(source),
        SsmError::Io(io) => io.kind() == std::io::ErrorKind::NotFound,
        SsmError::ZeroBandwidth => false,
        _ => true,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<SsmError>() {
            return if is_input_error(e) { 2 } else { 1 };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

/// Applies command-line overrides so the config hash covers them.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.root_seed = seed;
    }
    match &cli.command {
        Command::Derive {
            model, estimator, ..
        } => {
            if let Some(m) = model {
                config.model = m.clone();
            }
            if let Some(name) = estimator {
                config.estimator = *registry::estimator(name, config.estimator)
                    .map_err(|e| InputError::new(e.to_string()))?
                    .config();
            }
        }
        Command::SampleFutures {
            v_lead,
            a_lead,
            count,
            ..
        } => {
            let f = &mut config.futures;
            f.v_lead = v_lead.unwrap_or(f.v_lead);
            f.a_lead = a_lead.unwrap_or(f.a_lead);
            f.count = count.unwrap_or(f.count);
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = effective_config(&cli)?;
    let provenance = Provenance {
        tool_version: ssm_core::TOOL_VERSION,
        command: cli.command.name(),
        config_hash: config.hash(),
        seed: config.root_seed,
    };
    let sink = Sink::new(&cli.out, provenance, cli.format)?;
    let ctx = commands::Context { config, sink };
    match &cli.command {
        Command::Ingest { trajectories } => commands::ingest(&ctx, trajectories.as_deref()),
        Command::Derive { pairs, .. } => commands::derive(&ctx, pairs.as_deref()),
        Command::Evaluate { table, queries } => commands::evaluate(&ctx, table, queries),
        Command::ReplicateWs => commands::replicate_ws(&ctx),
        Command::Benchmark { table } => commands::benchmark(&ctx, table),
        Command::SimulateScenario { scenario, table } => {
            commands::simulate_scenario(&ctx, scenario, table)
        }
        Command::SampleFutures { source, .. } => commands::sample_futures(&ctx, source),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
