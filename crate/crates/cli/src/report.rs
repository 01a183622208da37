//! Report documents and CSVs built from an archive.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use evobudget::accounting::cumulative_flops;
use evobudget::analysis::{
    bootstrap_stats, cells_from_runs, compute_envelope, fit_bilinear, nested_model_compare,
    optimal_depth, per_seed_by_depth, permutation_test_depth_gain, time_to_threshold,
    DepthOptimum, Plateau, Resampling, SweepCell,
};
use evobudget::analysis::plateau_halfwidth;
use evobudget::engine::{Protocol, RunRecord};
use evobudget::geom::Task;
use evobudget::rng::{stream, Purpose};
use evobudget::store::{Archive, RunFilter};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Envelope,
    Fit,
    Nested,
    Threshold,
    Table2,
    Table3,
}

impl ReportKind {
    pub const ALL: [ReportKind; 6] = [
        ReportKind::Envelope,
        ReportKind::Fit,
        ReportKind::Nested,
        ReportKind::Threshold,
        ReportKind::Table2,
        ReportKind::Table3,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ReportKind::Envelope => "envelope",
            ReportKind::Fit => "fit",
            ReportKind::Nested => "nested",
            ReportKind::Threshold => "threshold",
            ReportKind::Table2 => "table2",
            ReportKind::Table3 => "table3",
        }
    }

    /// Distinguishes the analysis streams of different reports.
    fn stream_base(self) -> u64 {
        (self as u64) << 32
    }
}

impl std::str::FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| format!("unknown report `{s}` (envelope, fit, nested, threshold, table2, table3)"))
    }
}

/// Files written, plus groups that could not be analysed.
#[derive(Debug, Default)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub problems: Vec<String>,
}

/// Method label used for table columns.
pub fn method_label(r: &RunRecord) -> String {
    match &r.protocol {
        Protocol::Greedy => format!("greedy T={}", r.budget.t),
        Protocol::Island(_) => "island".into(),
        Protocol::Base(b) => format!("base-{}", b.policy.policy),
    }
}

fn method_order(r: &RunRecord) -> (u8, u64, String) {
    match &r.protocol {
        Protocol::Greedy => (0, r.budget.t, String::new()),
        Protocol::Island(_) => (1, 0, String::new()),
        Protocol::Base(b) => (2, b.policy.policy as u64, String::new()),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "---".into(), |x| format!("{x:.digits$}"))
}

struct Writer<'a> {
    archive: &'a Archive,
    out: ReportOutput,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.archive.reports_dir().join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.out.files.push(path);
        Ok(())
    }
}

fn header(archive: &Archive, cfg: &ExperimentConfig, title: &str) -> Result<String> {
    let manifest = archive
        .read_manifest()?
        .context("the experiment root has no manifest; run a sweep first")?;
    let mut s = format!("# {title}\n\n");
    let _ = writeln!(s, "- config_hash: {}", manifest.config_hash);
    let _ = writeln!(s, "- seeds: {:?}", manifest.seeds);
    let _ = writeln!(s, "- analysis_seed: {}", cfg.report.analysis_seed);
    let _ = writeln!(s, "- resamples: {}", cfg.report.resamples);
    let _ = writeln!(s, "- shuffles: {}", cfg.report.shuffles);
    s.push('\n');
    Ok(s)
}

fn load(archive: &Archive, protocol: Option<&str>) -> Result<Vec<RunRecord>> {
    let filter = RunFilter {
        protocol: protocol.map(str::to_string),
        ..RunFilter::default()
    };
    let runs = archive.load_runs(&filter)?;
    if runs.is_empty() {
        bail!(
            "no completed {}runs in the archive",
            protocol.map(|p| format!("{p} ")).unwrap_or_default()
        );
    }
    Ok(runs)
}

/// Greedy sweep cells grouped by `(model, task)`.
fn greedy_groups(runs: &[RunRecord]) -> BTreeMap<(String, Task), Vec<SweepCell>> {
    let mut groups: BTreeMap<(String, Task), Vec<SweepCell>> = BTreeMap::new();
    for cell in cells_from_runs(runs) {
        groups
            .entry((cell.model_id.clone(), cell.task))
            .or_default()
            .push(cell);
    }
    groups
}

pub fn write_report(
    archive: &Archive,
    cfg: &ExperimentConfig,
    kind: ReportKind,
    budget: Option<u64>,
) -> Result<ReportOutput> {
    let mut w = Writer {
        archive,
        out: ReportOutput::default(),
    };
    match kind {
        ReportKind::Envelope => envelope(&mut w, cfg)?,
        ReportKind::Fit => fit(&mut w, cfg)?,
        ReportKind::Nested => nested(&mut w, cfg)?,
        ReportKind::Threshold | ReportKind::Table3 => threshold(&mut w, cfg, kind, budget)?,
        ReportKind::Table2 => table2(&mut w, cfg, budget)?,
    }
    Ok(w.out)
}

fn envelope(w: &mut Writer, cfg: &ExperimentConfig) -> Result<()> {
    let runs = load(w.archive, Some("greedy"))?;
    let spec = cfg.model.spec();
    let mut doc = header(w.archive, cfg, "Depth envelope")?;
    let mut csv = String::from("model,task,c,v_max,argmax_t,best_of_n,pen_bon,p_depth_gain,depths\n");
    let mut surface = String::from("model,task,c,t,n,seeds,mean_fitness,mean_flops\n");

    // Mean total FLOPs per (model, task, C, T).
    let mut flops: BTreeMap<(String, Task, u64, u64), Vec<f64>> = BTreeMap::new();
    for r in &runs {
        let total = cumulative_flops(r.usage_records(), &spec)?.total() as f64;
        flops
            .entry((r.model_id.clone(), r.task, r.budget.c, r.budget.t))
            .or_default()
            .push(total);
    }

    for (g, ((model, task), cells)) in greedy_groups(&runs).into_iter().enumerate() {
        let _ = writeln!(doc, "## {model} / {task}\n");
        doc.push_str("| C | V_max | argmax T | best-of-N (T=1) | penBoN | p (depth gain) | depths |\n");
        doc.push_str("|---|---|---|---|---|---|---|\n");
        for (i, row) in compute_envelope(&cells).into_iter().enumerate() {
            let by_depth = per_seed_by_depth(&cells, row.c);
            let p = if row.best_of_n.is_some() && by_depth.len() >= 2 && cfg.report.shuffles > 0 {
                let mut rng = stream(
                    cfg.report.analysis_seed,
                    Purpose::Analysis,
                    ReportKind::Envelope.stream_base() + ((g as u64) << 16) + i as u64,
                );
                permutation_test_depth_gain(&by_depth, cfg.report.shuffles, &mut rng)
                    .ok()
                    .map(|r| r.p)
            } else {
                None
            };
            let _ = writeln!(
                doc,
                "| {} | {:.4} | {} | {} | {} | {} | {} |",
                row.c,
                row.v_max,
                row.argmax_t,
                fmt_opt(row.best_of_n, 4),
                fmt_opt(row.pen_bon, 4),
                fmt_opt(p, 4),
                row.depths
            );
            let _ = writeln!(
                csv,
                "{model},{task},{},{},{},{},{},{},{}",
                row.c,
                row.v_max,
                row.argmax_t,
                fmt_opt(row.best_of_n, 6),
                fmt_opt(row.pen_bon, 6),
                fmt_opt(p, 6),
                row.depths
            );
        }
        doc.push('\n');
        for cell in &cells {
            let f = &flops[&(model.clone(), task, cell.c, cell.t)];
            let mean_flops = f.iter().sum::<f64>() / f.len() as f64;
            let _ = writeln!(
                surface,
                "{model},{task},{},{},{},{},{},{:.6e}",
                cell.c,
                cell.t,
                cell.n,
                cell.fitness.len(),
                cell.mean(),
                mean_flops
            );
        }
    }
    w.write("envelope.md", &doc)?;
    w.write("envelope.csv", &csv)?;
    w.write("surface.csv", &surface)?;
    Ok(())
}

fn fit(w: &mut Writer, cfg: &ExperimentConfig) -> Result<()> {
    let runs = load(w.archive, Some("greedy"))?;
    let opts = cfg.report.fit_options();
    let mut doc = header(w.archive, cfg, "Depth-breadth fit")?;
    let _ = writeln!(
        doc,
        "ln(1 - V) = beta0 + a ln T + b ln N + c ln T ln N, cells with mean < {}, response {:?}\n",
        opts.ceiling, opts.response
    );
    doc.push_str("| Task | Model | beta0 | a | b | c | R^2 | p_c (perm) | p_c (t) | cells | obs |\n");
    doc.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    let mut csv = String::from("model,task,beta0,a,b,c,r2,p_c_perm,p_c_t,n_cells,n_obs\n");
    let mut optima = String::new();
    let mut opt_csv = String::from("model,task,c,regime,depth,log_vertex,plateau_halfwidth\n");

    for (g, ((model, task), cells)) in greedy_groups(&runs).into_iter().enumerate() {
        let mut rng = stream(
            cfg.report.analysis_seed,
            Purpose::Analysis,
            ReportKind::Fit.stream_base() + g as u64,
        );
        let f = match fit_bilinear(&cells, &opts, &mut rng) {
            Ok(f) => f,
            Err(e) => {
                let msg = format!("{model}/{task}: cannot fit: {e}");
                let _ = writeln!(doc, "| {task} | {model} | {msg} |||||||||");
                w.out.problems.push(msg);
                continue;
            }
        };
        let _ = writeln!(
            doc,
            "| {task} | {model} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {} | {:.4} | {} | {} |",
            f.beta0, f.a, f.b, f.c, f.r2, fmt_opt(f.p_c, 4), f.p_c_t, f.n_cells, f.n_obs
        );
        let _ = writeln!(
            csv,
            "{model},{task},{},{},{},{},{},{},{},{},{}",
            f.beta0, f.a, f.b, f.c, f.r2, fmt_opt(f.p_c, 6), f.p_c_t, f.n_cells, f.n_obs
        );
        let plateau = match plateau_halfwidth(&f, cfg.report.plateau_delta) {
            Plateau::Finite(h) => format!("{h:.4}"),
            Plateau::Infinite => "inf".into(),
        };
        let _ = writeln!(optima, "### {model} / {task}\n");
        let _ = writeln!(
            optima,
            "plateau halfwidth (ln T, delta = {}): {plateau}\n",
            cfg.report.plateau_delta
        );
        optima.push_str("| C | regime | depth | vertex ln T |\n|---|---|---|---|\n");
        let budgets: std::collections::BTreeSet<u64> = cells.iter().map(|c| c.c).collect();
        for c in budgets {
            let (regime, depth, vertex) = match optimal_depth(&f, c as f64) {
                DepthOptimum::Interior { t_star, log_t_star } => {
                    ("interior".to_string(), t_star, Some(log_t_star))
                }
                DepthOptimum::Corner { t, log_vertex, reason } => {
                    (format!("corner ({reason:?})"), t, log_vertex)
                }
            };
            let _ = writeln!(optima, "| {c} | {regime} | {depth:.3} | {} |", fmt_opt(vertex, 4));
            let _ = writeln!(
                opt_csv,
                "{model},{task},{c},{regime},{depth},{},{plateau}",
                fmt_opt(vertex, 6)
            );
        }
        optima.push('\n');
    }
    if !optima.is_empty() {
        doc.push_str("\n## Compute-optimal depth\n\n");
        doc.push_str(&optima);
    }
    w.write("fit.md", &doc)?;
    w.write("fit.csv", &csv)?;
    w.write("depth_optimum.csv", &opt_csv)?;
    Ok(())
}

fn nested(w: &mut Writer, cfg: &ExperimentConfig) -> Result<()> {
    let runs = load(w.archive, Some("greedy"))?;
    let opts = cfg.report.fit_options();
    let mut doc = header(w.archive, cfg, "Nested model comparison")?;
    let mut csv = String::from("model,task,kind,params,r2,rss,df_resid,f_vs_m1,p_vs_m1\n");
    for ((model, task), cells) in greedy_groups(&runs) {
        let _ = writeln!(doc, "## {model} / {task}\n");
        let models = match nested_model_compare(&cells, &opts) {
            Ok(m) => m,
            Err(e) => {
                let msg = format!("{model}/{task}: cannot fit: {e}");
                let _ = writeln!(doc, "{msg}\n");
                w.out.problems.push(msg);
                continue;
            }
        };
        doc.push_str("| model | terms | params | R^2 | RSS | df | F vs M1 | p vs M1 |\n");
        doc.push_str("|---|---|---|---|---|---|---|---|\n");
        for m in models {
            let _ = writeln!(
                doc,
                "| {:?} | {} | {} | {:.4} | {:.4e} | {} | {} | {} |",
                m.kind,
                m.kind.describe(),
                m.params,
                m.r2,
                m.rss,
                m.df_resid,
                fmt_opt(m.f_vs_m1, 3),
                fmt_opt(m.p_vs_m1, 4)
            );
            let _ = writeln!(
                csv,
                "{model},{task},{:?},{},{},{},{},{},{}",
                m.kind,
                m.params,
                m.r2,
                m.rss,
                m.df_resid,
                fmt_opt(m.f_vs_m1, 6),
                fmt_opt(m.p_vs_m1, 6)
            );
        }
        doc.push('\n');
    }
    w.write("nested.md", &doc)?;
    w.write("nested.csv", &csv)?;
    Ok(())
}

/// Runs at budget `budget` (default: the largest present), grouped by
/// `(model, task)` then method in column order.
type MethodGroups = BTreeMap<(String, Task), BTreeMap<(u8, u64, String), (String, Vec<RunRecord>)>>;

fn by_method(runs: Vec<RunRecord>, budget: Option<u64>) -> Result<(u64, MethodGroups)> {
    let c = match budget {
        Some(c) => c,
        None => runs.iter().map(|r| r.budget.c).max().unwrap_or(0),
    };
    let mut groups: MethodGroups = BTreeMap::new();
    for r in runs.into_iter().filter(|r| r.budget.c == c) {
        groups
            .entry((r.model_id.clone(), r.task))
            .or_default()
            .entry(method_order(&r))
            .or_insert_with(|| (method_label(&r), Vec::new()))
            .1
            .push(r);
    }
    if groups.is_empty() {
        bail!("no completed runs at budget C={c}");
    }
    Ok((c, groups))
}

fn table2(w: &mut Writer, cfg: &ExperimentConfig, budget: Option<u64>) -> Result<()> {
    let (c, groups) = by_method(load(w.archive, None)?, budget)?;
    let mut doc = header(w.archive, cfg, &format!("Final fitness at C={c} (mean +- SE)"))?;
    let mut csv = String::from("model,task,method,runs,mean,se,ci95_lo,ci95_hi,iqm\n");
    for (g, ((model, task), methods)) in groups.into_iter().enumerate() {
        let mut cells = Vec::new();
        for (m, (label, runs)) in methods.values().enumerate() {
            let fitness: Vec<f64> = runs.iter().filter_map(RunRecord::final_fitness).collect();
            let mut rng = stream(
                cfg.report.analysis_seed,
                Purpose::Analysis,
                ReportKind::Table2.stream_base() + ((g as u64) << 16) + m as u64,
            );
            let s = bootstrap_stats(&[fitness], cfg.report.resamples, &mut rng)?;
            let _ = writeln!(
                csv,
                "{model},{task},{label},{},{},{},{},{},{}",
                s.n, s.mean, s.se, s.ci95.0, s.ci95.1, s.iqm
            );
            cells.push((label.clone(), s.mean, s.se));
        }
        let best = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(doc, "## {model} / {task}\n");
        let heads: Vec<&str> = cells.iter().map(|c| c.0.as_str()).collect();
        let _ = writeln!(doc, "| {} |", heads.join(" | "));
        let _ = writeln!(doc, "|{}", "---|".repeat(heads.len()));
        let row: Vec<String> = cells
            .iter()
            .map(|(_, mean, se)| {
                let text = format!("{mean:.4} +- {se:.4}");
                if *mean == best {
                    format!("**{text}**")
                } else {
                    text
                }
            })
            .collect();
        let _ = writeln!(doc, "| {} |\n", row.join(" | "));
    }
    w.write("table2.md", &doc)?;
    w.write("table2.csv", &csv)?;
    Ok(())
}

fn threshold(w: &mut Writer, cfg: &ExperimentConfig, kind: ReportKind, budget: Option<u64>) -> Result<()> {
    let (c, groups) = by_method(load(w.archive, None)?, budget)?;
    let spec = cfg.model.spec();
    let taus = &cfg.report.thresholds;
    let how = Resampling::MonteCarlo(cfg.report.resamples);
    let title = format!(
        "Calls and FLOPs for {:.0}% of resamples to reach each threshold (C={c})",
        cfg.report.quantile * 100.0
    );
    let mut doc = header(w.archive, cfg, &title)?;
    let mut csv = String::from("model,task,method,runs,tau,generation,flops,support\n");
    for (g, ((model, task), methods)) in groups.into_iter().enumerate() {
        let mut columns = Vec::new();
        for (m, (label, runs)) in methods.values().enumerate() {
            let mut rng = stream(
                cfg.report.analysis_seed,
                Purpose::Analysis,
                ReportKind::Threshold.stream_base() + ((g as u64) << 16) + m as u64,
            );
            let res = time_to_threshold(runs, &spec, taus, cfg.report.quantile, how, &mut rng)?;
            for r in &res {
                let _ = writeln!(
                    csv,
                    "{model},{task},{label},{},{},{},{},{}",
                    runs.len(),
                    r.tau,
                    r.generation_cell(),
                    r.flops.map_or_else(|| "---".into(), |f| format!("{f:.6e}")),
                    fmt_opt(r.support, 4)
                );
            }
            columns.push((label.clone(), res));
        }
        let _ = writeln!(doc, "## {model} / {task}\n");
        if kind == ReportKind::Table3 {
            let mut head = String::from("| tau |");
            let mut rule = String::from("|---|");
            for (label, _) in &columns {
                let _ = write!(head, " {label} Gen. | {label} FLOPs (1e15) |");
                rule.push_str("---|---|");
            }
            let _ = writeln!(doc, "{head}\n{rule}");
            for (i, tau) in taus.iter().enumerate() {
                let _ = write!(doc, "| {tau} |");
                for (_, res) in &columns {
                    let r = &res[i];
                    let f = r.flops.map_or_else(|| "---".into(), |f| format!("{:.2}", f / 1e15));
                    let _ = write!(doc, " {} | {f} |", r.generation_cell());
                }
                doc.push('\n');
            }
        } else {
            doc.push_str("| method | tau | generation | FLOPs | support |\n|---|---|---|---|---|\n");
            for (label, res) in &columns {
                for r in res {
                    let _ = writeln!(
                        doc,
                        "| {label} | {} | {} | {} | {} |",
                        r.tau,
                        r.generation_cell(),
                        r.flops_cell(),
                        fmt_opt(r.support, 3)
                    );
                }
            }
        }
        doc.push('\n');
    }
    let stem = kind.key();
    w.write(&format!("{stem}.md"), &doc)?;
    w.write(&format!("{stem}.csv"), &csv)?;
    Ok(())
}
