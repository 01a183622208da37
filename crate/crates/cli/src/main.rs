use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evobudget::base::PolicyKind;
use evobudget::geom::Task;
use evobudget_cli::config::{ENV_ENDPOINT, ENV_ROOT};
use evobudget_cli::{ExperimentConfig, Outcome, Overrides, ReportKind};

#[derive(Parser)]
#[command(name = "evobudget", version, about = "Budgeted LLM-driven evolutionary search")]
struct Cli {
    /// Experiment root; every output is written below it.
    #[arg(long, global = true, env = ENV_ROOT)]
    root: Option<PathBuf>,

    /// Experiment config (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: OverrideArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy runs over the (C, T) grid for every seed.
    Sweep,
    /// Island-protocol runs.
    Island,
    /// BaSE runs for every policy and seed.
    Base,
    /// Tables and CSVs from the archive.
    Report {
        /// Reports to write; all when omitted.
        #[arg(long = "kind", value_parser = parse_kind)]
        kinds: Vec<ReportKind>,
        /// Budget for table2/table3/threshold; defaults to the largest run.
        #[arg(long = "at-budget")]
        at_budget: Option<u64>,
    },
    /// Parses and validates the config, then prints it fully resolved.
    ValidateConfig,
}

#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    active_params: Option<u64>,
    /// Chat-completions base URL; selects the endpoint backend.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Sweep budgets, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    budgets: Option<Vec<u64>>,
    /// Sweep depths, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    depths: Option<Vec<u64>>,
    /// Budget for island and BaSE runs.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    max_inflight: Option<usize>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            task: self.task,
            seeds: self.seeds.clone(),
            model: self.model.clone(),
            active_params: self.active_params,
            endpoint: self.endpoint.clone(),
            budgets: self.budgets.clone(),
            depths: self.depths.clone(),
            budget: self.budget,
            k: self.k,
            policies: self.policies.clone(),
            workers: self.workers,
            max_inflight: self.max_inflight,
        }
    }
}

fn parse_kind(s: &str) -> Result<ReportKind, String> {
    s.parse()
}

fn resolve(cli: &Cli, allow_manifest: bool) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.root) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(root)) if allow_manifest => evobudget_cli::manifest_config(root)?,
        _ => bail!("--config is required"),
    };
    let env = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.is_empty());
    cfg.apply(&cli.overrides.to_overrides(), env.as_deref());
    cfg.validate()?;
    Ok(cfg)
}

fn root(cli: &Cli) -> Result<PathBuf> {
    cli.root
        .clone()
        .with_context(|| format!("pass --root or set {ENV_ROOT}"))
}

fn finish(outcome: Outcome) -> ExitCode {
    eprintln!("{}", outcome.summary());
    if outcome.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::ValidateConfig => {
            let cfg = resolve(&cli, false)?;
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep => Ok(finish(evobudget_cli::cmd_sweep(&root(&cli)?, &resolve(&cli, false)?)?)),
        Command::Island => Ok(finish(evobudget_cli::cmd_island(&root(&cli)?, &resolve(&cli, false)?)?)),
        Command::Base => Ok(finish(evobudget_cli::cmd_base(&root(&cli)?, &resolve(&cli, false)?)?)),
        Command::Report { kinds, at_budget } => {
            let root = root(&cli)?;
            let cfg = resolve(&cli, true)?;
            let kinds = if kinds.is_empty() {
                ReportKind::ALL.to_vec()
            } else {
                kinds.clone()
            };
            let out = evobudget_cli::cmd_report(&root, &cfg, &kinds, *at_budget)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            for p in &out.problems {
                eprintln!("error: {p}");
            }
            Ok(if out.problems.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
