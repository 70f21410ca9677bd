mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::Config;
use error::Result;

#[derive(Parser)]
#[command(
    name = "iclscope",
    version,
    about = "Suite generation and activation analysis for in-context learning studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config file with flat dotted keys (nested objects are flattened).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated layer ids, or `last`.
    #[arg(long, global = true)]
    layers: Option<String>,
    #[arg(long, global = true, value_parser = ["max", "mean"])]
    pooling: Option<String>,
    #[arg(long, global = true, value_parser = ["max", "mean"])]
    aggregation: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    dump: Option<PathBuf>,
    #[arg(long, global = true)]
    task: Option<String>,
    /// `label:<key>`, `combined:<key1>,<key2>` or `sr[:gamma]`.
    #[arg(long, global = true)]
    hypothesis: Option<String>,
    #[arg(long = "n-perm", global = true)]
    n_perm: Option<usize>,
    /// Any other setting, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write prompt suites, oracle responses and a synthetic dump.
    Gen,
    /// Check a dump directory against the format invariants.
    Validate,
    /// Similarity matrices, hypothesis alignment and Mantel tests.
    Rsa,
    /// Attention ratio samples and group tests.
    Ara,
    /// Linear probes with Monte Carlo cross-validation.
    Probe,
    /// Score a response file against a suite.
    Score {
        #[arg(long)]
        suite: Option<PathBuf>,
        /// JSON lines of `{record_id, response_text}`.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Merge the reports of earlier runs and draw summary figures.
    Report {
        /// Output directories of earlier `rsa`, `ara` or `probe` runs.
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Validate => "validate",
            Command::Rsa => "rsa",
            Command::Ara => "ara",
            Command::Probe => "probe",
            Command::Score { .. } => "score",
            Command::Report { .. } => "report",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config> {
    let c = &cli.common;
    let mut cfg = Config::load(c.config.as_deref())?;
    let path = |p: &PathBuf| Value::String(p.display().to_string());
    let flags: [(&str, Option<Value>); 9] = [
        ("seed", c.seed.map(Value::from)),
        ("layers", c.layers.clone().map(Value::String)),
        ("pooling", c.pooling.clone().map(Value::String)),
        ("aggregation", c.aggregation.clone().map(Value::String)),
        ("out", c.out.as_ref().map(path)),
        ("dump", c.dump.as_ref().map(path)),
        ("task", c.task.clone().map(Value::String)),
        ("hypothesis", c.hypothesis.clone().map(Value::String)),
        ("n_perm", c.n_perm.map(Value::from)),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v);
        }
    }
    for pair in &c.set {
        cfg.set_pair(pair)?;
    }
    match &cli.command {
        Command::Score { suite, responses } => {
            if let Some(p) = suite {
                cfg.set("suite", path(p));
            }
            if let Some(p) = responses {
                cfg.set("responses", path(p));
            }
        }
        Command::Report { inputs } if !inputs.is_empty() => {
            cfg.set("inputs", Value::Array(inputs.iter().map(path).collect()));
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    let mut ctx = commands::Context::new(cfg)?;
    let result = match &cli.command {
        Command::Gen => commands::gen::run(&mut ctx),
        Command::Validate => commands::validate::run(&mut ctx),
        Command::Rsa => commands::rsa::run(&mut ctx),
        Command::Ara => commands::ara::run(&mut ctx),
        Command::Probe => commands::probe::run(&mut ctx),
        Command::Score { .. } => commands::score::run(&mut ctx),
        Command::Report { .. } => commands::report::run(&mut ctx),
    };
    ctx.finish(cli.command.name(), result.as_ref().err())?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
