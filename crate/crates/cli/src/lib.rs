//! Library side of the `codescore` binary: flag parsing, configuration
//! merging and the pipeline stages.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use codescore_core::stats::TauVariant;
use codescore_core::unice::InputFormat;
use codescore_core::Error;

pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    /// 1 usage or configuration, 2 bad input data, 3 environment or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                Error::Unavailable(_) => 1,
                Error::Io { .. } | Error::Environment(_) | Error::Infrastructure(_) | Error::Remote(_) => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "codescore", version, about = "Execution-grounded evaluation of generated code")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Fail on unknown fields, malformed records and unmatched joins.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long = "limits.wall-time-ms", global = true)]
    pub wall_time_ms: Option<u64>,
    #[arg(long = "limits.cpu-time-ms", global = true)]
    pub cpu_time_ms: Option<u64>,
    #[arg(long = "limits.memory-bytes", global = true)]
    pub memory_bytes: Option<u64>,
    #[arg(long = "limits.max-output-bytes", global = true)]
    pub max_output_bytes: Option<u64>,
    #[arg(long = "limits.network", global = true)]
    pub network: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run candidates against their test suites and record PassRatio and executability.
    Execute {
        /// Keep per-case wall times in the output.
        #[arg(long)]
        timings: bool,
    },
    /// Grow each task's suite with oracle-labelled inputs.
    ExtendTests {
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        max_attempts: Option<usize>,
        /// Also ask the configured language model for extra inputs.
        #[arg(long)]
        llm: bool,
    },
    /// Compute match-based and learned metrics.
    Score {
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        format: Vec<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Fit the learned metric on execution ground truth.
    Train {
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Correlate metric values with ground truth.
    Correlate {
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// literal or tau_b.
        #[arg(long)]
        tau_variant: Option<String>,
    },
    /// Print the correlation table.
    Report {
        #[arg(long)]
        correlation: Option<PathBuf>,
    },
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.corpus {
        cfg.corpus = Some(v.clone());
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.jobs {
        cfg.jobs = v;
    }
    cfg.strict |= c.strict;
    if let Some(v) = &c.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if let Some(v) = c.wall_time_ms {
        cfg.limits = if c.cpu_time_ms.is_some() {
            codescore_core::sandbox::ExecutionLimits {
                wall_time_ms: v,
                ..cfg.limits
            }
        } else {
            cfg.limits.with_wall_time_ms(v)
        };
    }
    if let Some(v) = c.cpu_time_ms {
        cfg.limits.cpu_time_ms = v;
    }
    if let Some(v) = c.memory_bytes {
        cfg.limits.memory_bytes = v;
    }
    if let Some(v) = c.max_output_bytes {
        cfg.limits.max_output_bytes = v;
    }
    cfg.limits.network_allowed |= c.network;

    match &cli.command {
        Command::Execute { timings } => cfg.timings |= timings,
        Command::ExtendTests {
            target,
            max_attempts,
            llm,
        } => {
            if let Some(t) = target {
                cfg.extend.target = *t;
            }
            if max_attempts.is_some() {
                cfg.extend.max_attempts = *max_attempts;
            }
            cfg.llm.enabled |= llm;
        }
        Command::Score {
            metrics,
            format,
            embeddings,
        } => {
            if !metrics.is_empty() {
                cfg.metrics.names = metrics.clone();
            }
            if !format.is_empty() {
                cfg.metrics.formats = format
                    .iter()
                    .map(|f| InputFormat::parse(f).map_err(|e| CliError::Usage(e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            if let Some(e) = embeddings {
                cfg.metrics.embeddings = Some(e.clone());
            }
        }
        Command::Train {
            ground_truth,
            epochs,
            lr,
            batch_size,
        } => {
            if let Some(g) = ground_truth {
                cfg.ground_truth = Some(g.clone());
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(l) = lr {
                cfg.train.learning_rate = *l;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = *b;
            }
        }
        Command::Correlate {
            ground_truth,
            scores,
            tau_variant,
        } => {
            if let Some(g) = ground_truth {
                cfg.ground_truth = Some(g.clone());
            }
            if let Some(s) = scores {
                cfg.scores = Some(s.clone());
            }
            if let Some(t) = tau_variant {
                cfg.tau_variant = match t.as_str() {
                    "literal" => TauVariant::Literal,
                    "tau_b" | "tie_corrected" => TauVariant::TieCorrected,
                    other => return Err(CliError::Usage(format!("unknown tau variant {other:?}"))),
                };
            }
        }
        Command::Report { correlation } => {
            if let Some(c) = correlation {
                cfg.correlation = Some(c.clone());
            }
        }
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand; returns the text meant for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Execute { .. } => {
            let o = commands::cmd_execute(&cfg)?;
            Ok(format!(
                "{} candidates  AvgPassRatio {:.4}  Pass@1 {:.4}  -> {}\n",
                o.aggregate.candidates,
                o.aggregate.avg_pass_ratio,
                o.aggregate.pass_at_1,
                o.path.display()
            ))
        }
        Command::ExtendTests { .. } => {
            let o = commands::cmd_extend(&cfg)?;
            let added: usize = o.reports.iter().map(|r| r.added).sum();
            let short = o.reports.iter().filter(|r| r.shortfall > 0).count();
            Ok(format!(
                "{} tasks  {added} cases added  {short} short of target  -> {}\n",
                o.tasks.len(),
                o.path.display()
            ))
        }
        Command::Score { .. } => {
            let o = commands::cmd_score(&cfg)?;
            Ok(format!("{} metric values -> {}\n", o.records.len(), o.path.display()))
        }
        Command::Train { .. } => {
            let o = commands::cmd_train(&cfg)?;
            let last = o.log.last().map_or(f64::NAN, |l| l.mean_loss);
            Ok(format!(
                "{} epochs  final loss {last:.6}  -> {}\n",
                o.log.len(),
                o.path.display()
            ))
        }
        Command::Correlate { .. } => {
            let o = commands::cmd_correlate(&cfg)?;
            Ok(format!("{} rows -> {}\n", o.records.len(), o.path.display()))
        }
        Command::Report { .. } => commands::cmd_report(&cfg),
    }
}
