//! Prompt templates and rendering.
//!
//! Templates are plain-text assets keyed by `(framework, task)`. Slots use
//! `{name}` placeholders; unknown placeholders are left untouched so that
//! literal braces in shipped texts survive rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Task;

/// Prompt scaffold a template set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    /// Full-rewrite scaffold, also used by the greedy and bandit protocols.
    OpenEvolve,
    CodeEvolve,
    ShinkaEvolve,
}

impl Framework {
    pub fn key(self) -> &'static str {
        match self {
            Framework::OpenEvolve => "openevolve",
            Framework::CodeEvolve => "codeevolve",
            Framework::ShinkaEvolve => "shinkaevolve",
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "openevolve" => Ok(Framework::OpenEvolve),
            "codeevolve" => Ok(Framework::CodeEvolve),
            "shinkaevolve" => Ok(Framework::ShinkaEvolve),
            other => Err(format!("unknown prompt framework `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no `{part}` template for framework {framework} and task {task}")]
    Missing {
        framework: &'static str,
        task: Task,
        part: &'static str,
    },
    #[error("failed to read template directory {path}: {message}")]
    Io { path: String, message: String },
}

macro_rules! asset {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/", $path))
    };
}

/// Template texts keyed by file stem (`user`, `cp_system`, ...) per framework.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    texts: BTreeMap<(Framework, String), String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        use Framework::*;
        let entries: [(Framework, &str, &str); 13] = [
            (OpenEvolve, "user", asset!("openevolve/user.txt")),
            (OpenEvolve, "cp_system", asset!("openevolve/cp_system.txt")),
            (OpenEvolve, "mmd_system", asset!("openevolve/mmd_system.txt")),
            (OpenEvolve, "ht_system", asset!("openevolve/ht_system.txt")),
            (CodeEvolve, "task_exploitation", asset!("codeevolve/task_exploitation.txt")),
            (CodeEvolve, "cp_system", asset!("codeevolve/cp_system.txt")),
            (CodeEvolve, "mmd_system", asset!("codeevolve/mmd_system.txt")),
            (CodeEvolve, "ht_system", asset!("codeevolve/ht_system.txt")),
            (ShinkaEvolve, "rewrite_suffix", asset!("shinkaevolve/rewrite_suffix.txt")),
            (ShinkaEvolve, "iteration", asset!("shinkaevolve/iteration.txt")),
            (ShinkaEvolve, "cp_system", asset!("shinkaevolve/cp_system.txt")),
            (ShinkaEvolve, "mmd_system", asset!("shinkaevolve/mmd_system.txt")),
            (ShinkaEvolve, "ht_system", asset!("shinkaevolve/ht_system.txt")),
        ];
        let texts = entries
            .into_iter()
            .map(|(fw, stem, text)| ((fw, stem.to_string()), text.to_string()))
            .collect();
        Self { texts }
    }

    /// Builtin set with any `<root>/<framework>/<stem>.txt` files overriding it.
    pub fn with_overrides(root: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for fw in [
            Framework::OpenEvolve,
            Framework::CodeEvolve,
            Framework::ShinkaEvolve,
        ] {
            let dir = root.join(fw.key());
            if !dir.is_dir() {
                continue;
            }
            let entries = std::fs::read_dir(&dir).map_err(|e| TemplateError::Io {
                path: dir.display().to_string(),
                message: e.to_string(),
            })?;
            for entry in entries.flatten() {
                let path = entry.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.texts.insert((fw, stem.to_string()), text);
            }
        }
        Ok(set)
    }

    pub fn get(&self, framework: Framework, task: Task, stem: &str) -> Result<&str, TemplateError> {
        self.texts
            .get(&(framework, stem.to_string()))
            .map(String::as_str)
            .ok_or(TemplateError::Missing {
                framework: framework.key(),
                task,
                part: match stem {
                    "user" => "user",
                    "iteration" => "iteration",
                    "rewrite_suffix" => "rewrite_suffix",
                    "task_exploitation" => "task_exploitation",
                    _ => "system",
                },
            })
    }

    pub fn system(&self, framework: Framework, task: Task) -> Result<&str, TemplateError> {
        self.get(framework, task, &format!("{}_system", task.key()))
    }
}

/// One previously scored candidate surfaced in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub summary: String,
    pub score: f64,
}

/// Everything a prompt is rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub task: Task,
    pub framework: Framework,
    pub current_program: String,
    pub fitness: f64,
    pub history: Vec<HistoryEntry>,
    /// Number of top programs rendered from `history`.
    pub top_k: usize,
    pub feature_coords: String,
    pub feature_dimensions: String,
    pub language: String,
    pub timeout_s: u64,
    pub max_mem: String,
}

impl PromptContext {
    pub fn new(task: Task, current_program: impl Into<String>, fitness: f64) -> Self {
        Self {
            task,
            framework: Framework::OpenEvolve,
            current_program: current_program.into(),
            fitness,
            history: Vec::new(),
            top_k: 3,
            feature_coords: "fitness_decile, program_length".into(),
            feature_dimensions: "fitness_decile, program_length".into(),
            language: "python".into(),
            timeout_s: 30,
            max_mem: "1 GiB".into(),
        }
    }
}

/// A system message plus a user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// Both messages as one text, system first.
    pub fn rendered(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Drops the blank-line-separated paragraph containing `marker`.
fn drop_block(text: &str, marker: &str) -> String {
    text.split("\n\n")
        .filter(|block| !block.contains(marker))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_history(ctx: &PromptContext) -> String {
    let mut ranked: Vec<&HistoryEntry> = ctx.history.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out = String::from("## Top Performing Programs\n");
    for (i, entry) in ranked.into_iter().take(ctx.top_k).enumerate() {
        let _ = write!(
            out,
            "\n### Program {} (Score: {:.4})\n```{}\n{}\n```\n",
            i + 1,
            entry.score,
            ctx.language,
            entry.summary.trim_end()
        );
    }
    out.trim_end().to_string()
}

/// Renders the prompt for `ctx`. Pure in `ctx` and `templates`.
pub fn build_prompt(ctx: &PromptContext, templates: &TemplateSet) -> Result<Prompt, TemplateError> {
    let fitness = format!("{:.4}", ctx.fitness);
    let system = templates.system(ctx.framework, ctx.task)?.trim_end().to_string();
    match ctx.framework {
        Framework::OpenEvolve => {
            let mut user = templates
                .get(ctx.framework, ctx.task, "user")?
                .trim_end()
                .to_string();
            if ctx.history.is_empty() {
                user = drop_block(&user, "{evolution_history}");
            }
            user = drop_block(&user, "{artifacts}");
            let history = render_history(ctx);
            let user = fill(
                &user,
                &[
                    ("fitness_score", &fitness),
                    ("feature_coords", &ctx.feature_coords),
                    ("improvement_areas", "Improve the fitness score."),
                    ("evolution_history", &history),
                    ("language", &ctx.language),
                    ("current_program", ctx.current_program.trim_end()),
                    ("feature_dimensions", &ctx.feature_dimensions),
                ],
            );
            Ok(Prompt { system, user })
        }
        Framework::CodeEvolve => {
            let budget = fill(
                templates.get(ctx.framework, ctx.task, "task_exploitation")?.trim_end(),
                &[
                    ("timeout_s", &ctx.timeout_s.to_string()),
                    ("max_mem", &ctx.max_mem),
                ],
            );
            let user = format!(
                "```{}\n{}\n```\n\nFitness: {}",
                ctx.language,
                ctx.current_program.trim_end(),
                fitness
            );
            Ok(Prompt {
                system: format!("{system}\n\n{budget}"),
                user,
            })
        }
        Framework::ShinkaEvolve => {
            let suffix = fill(
                templates.get(ctx.framework, ctx.task, "rewrite_suffix")?.trim_end(),
                &[("language", &ctx.language)],
            );
            let metrics = format!("combined_score: {fitness}");
            let feedback = if ctx.history.is_empty() {
                String::new()
            } else {
                format!("\n\n{}", render_history(ctx))
            };
            let user = fill(
                templates.get(ctx.framework, ctx.task, "iteration")?.trim_end(),
                &[
                    ("language", &ctx.language),
                    ("code_content", ctx.current_program.trim_end()),
                    ("performance_metrics", &metrics),
                    ("text_feedback_section", &feedback),
                ],
            );
            Ok(Prompt {
                system: format!("{system}\n\n{suffix}"),
                user,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(task: Task) -> PromptContext {
        PromptContext::new(task, "def f():\n    return 1\n", 0.25)
    }

    #[test]
    fn empty_history_has_no_history_block() {
        let p = build_prompt(&ctx(Task::CirclePacking), &TemplateSet::builtin()).unwrap();
        assert!(!p.user.contains("Program Evolution History"));
        assert!(p.user.contains("# Current Program\n```python\ndef f():"));
        assert!(p.user.contains("- Fitness: 0.2500"));
        assert!(!p.user.contains('{') || !p.user.contains("{current_program}"));
    }

    #[test]
    fn three_entries_at_capacity_all_rendered() {
        let mut c = ctx(Task::MinMaxDist);
        c.history = (0..3)
            .map(|i| HistoryEntry {
                summary: format!("prog_{i}"),
                score: 0.1 * i as f64,
            })
            .collect();
        let p = build_prompt(&c, &TemplateSet::builtin()).unwrap();
        assert!(p.user.contains("# Program Evolution History"));
        for i in 0..3 {
            assert!(p.user.contains(&format!("prog_{i}")));
        }
        // highest score first
        assert!(p.user.find("prog_2").unwrap() < p.user.find("prog_0").unwrap());
    }

    #[test]
    fn history_beyond_top_k_is_truncated() {
        let mut c = ctx(Task::MinMaxDist);
        c.history = (0..5)
            .map(|i| HistoryEntry {
                summary: format!("prog_{i}"),
                score: 0.1 * i as f64,
            })
            .collect();
        let p = build_prompt(&c, &TemplateSet::builtin()).unwrap();
        assert!(!p.user.contains("prog_0") && !p.user.contains("prog_1"));
        assert!(p.user.contains("prog_4"));
    }

    #[test]
    fn cp_system_message_verbatim() {
        let p = build_prompt(&ctx(Task::CirclePacking), &TemplateSet::builtin()).unwrap();
        assert!(p
            .rendered()
            .contains("You are an expert mathematician specializing in circle packing problems and\ncomputational geometry."));
        assert!(p.system.contains("The AlphaEvolve paper achieved a sum of\n2.635 for n=26."));
    }

    #[test]
    fn deterministic() {
        let c = ctx(Task::Heilbronn);
        let t = TemplateSet::builtin();
        assert_eq!(build_prompt(&c, &t).unwrap(), build_prompt(&c, &t).unwrap());
    }

    #[test]
    fn other_frameworks_render() {
        let t = TemplateSet::builtin();
        let mut c = ctx(Task::Heilbronn);
        c.framework = Framework::CodeEvolve;
        let p = build_prompt(&c, &t).unwrap();
        assert!(p.system.contains("- Time limit: 30 seconds maximum execution time"));
        c.framework = Framework::ShinkaEvolve;
        let p = build_prompt(&c, &t).unwrap();
        assert!(p.system.contains("<NAME>"));
        assert!(p.user.contains("combined_score: 0.2500"));
    }

    #[test]
    fn missing_template_is_config_error() {
        let mut t = TemplateSet::builtin();
        t.texts.remove(&(Framework::OpenEvolve, "ht_system".to_string()));
        assert!(matches!(
            build_prompt(&ctx(Task::Heilbronn), &t),
            Err(TemplateError::Missing { .. })
        ));
    }

    #[test]
    fn overrides_replace_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("openevolve")).unwrap();
        std::fs::write(dir.path().join("openevolve/cp_system.txt"), "custom system").unwrap();
        let t = TemplateSet::with_overrides(dir.path()).unwrap();
        let p = build_prompt(&ctx(Task::CirclePacking), &t).unwrap();
        assert_eq!(p.system, "custom system");
    }
}
