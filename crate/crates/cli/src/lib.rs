//! Command implementations behind the `evobudget` binary.

pub mod config;
pub mod report;
pub mod run;

use std::path::Path;

use anyhow::{Context, Result};
use evobudget::store::Archive;

pub use config::{ConfigError, ExperimentConfig, Overrides};
pub use report::{write_report, ReportKind, ReportOutput};
pub use run::{Outcome, Unit};

fn open(root: &Path) -> Result<Archive> {
    Archive::open(root).with_context(|| format!("opening experiment root {}", root.display()))
}

fn execute(root: &Path, cfg: &ExperimentConfig, units: Vec<Unit>) -> Result<Outcome> {
    cfg.validate()?;
    let archive = open(root)?;
    run::ensure_manifest(&archive, cfg)?;
    let backend = run::build_backend(cfg, &archive)?;
    Ok(run::execute(&archive, cfg, &units, backend.as_ref()))
}

/// Greedy runs over the `(C, T)` grid times seeds.
pub fn cmd_sweep(root: &Path, cfg: &ExperimentConfig) -> Result<Outcome> {
    execute(root, cfg, run::sweep_units(cfg))
}

/// Island-protocol runs, one per seed.
pub fn cmd_island(root: &Path, cfg: &ExperimentConfig) -> Result<Outcome> {
    execute(root, cfg, run::island_units(cfg))
}

/// BaSE runs over policies times seeds.
pub fn cmd_base(root: &Path, cfg: &ExperimentConfig) -> Result<Outcome> {
    execute(root, cfg, run::base_units(cfg))
}

/// Writes the requested reports under `<root>/reports`.
pub fn cmd_report(
    root: &Path,
    cfg: &ExperimentConfig,
    kinds: &[ReportKind],
    budget: Option<u64>,
) -> Result<ReportOutput> {
    let archive = open(root)?;
    let mut out = ReportOutput::default();
    for &kind in kinds {
        match write_report(&archive, cfg, kind, budget) {
            Ok(r) => {
                out.files.extend(r.files);
                out.problems.extend(r.problems);
            }
            Err(e) => out.problems.push(format!("{}: {e:#}", kind.key())),
        }
    }
    Ok(out)
}

/// The config recorded in an experiment root's manifest.
pub fn manifest_config(root: &Path) -> Result<ExperimentConfig> {
    let archive = open(root)?;
    let manifest = archive
        .read_manifest()?
        .context("the experiment root has no manifest; pass --config")?;
    let cfg: ExperimentConfig = manifest
        .config
        .try_into()
        .context("manifest config does not match this version's schema")?;
    Ok(cfg)
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
