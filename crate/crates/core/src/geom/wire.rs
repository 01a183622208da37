//! The configuration record candidate programs print on stdout.
//!
//! Circle packing: `{"centers": [[x, y], ...], "radii": [r, ...]}`.
//! Point tasks: `{"points": [[x, y], ...]}`. The record is one JSON document;
//! when the output stream carries other text, the last line that parses as a
//! record wins.

use serde::Deserialize;
use thiserror::Error;

use super::{CirclePacking, Configuration, Point, PointSet, Task};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("no configuration record found in program output")]
    NoRecord,
    #[error("record has the wrong shape for task {task}")]
    Shape { task: Task },
    #[error("arity mismatch: expected {expected} entries, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("non-finite coordinate in record")]
    NonFinite,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PackingRecord {
    centers: Vec<Point>,
    radii: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointsRecord {
    points: Vec<Point>,
}

fn decode(task: Task, text: &str) -> Option<Configuration> {
    match task {
        Task::CirclePacking => serde_json::from_str::<PackingRecord>(text)
            .ok()
            .map(|r| Configuration::Packing(CirclePacking::new(r.centers, r.radii))),
        Task::MinMaxDist | Task::Heilbronn => serde_json::from_str::<PointsRecord>(text)
            .ok()
            .map(|r| Configuration::Points(PointSet::new(r.points))),
    }
}

/// Parses and arity-checks the configuration record in `output`.
pub fn parse_configuration(task: Task, output: &str) -> Result<Configuration, WireError> {
    let config = decode(task, output.trim())
        .or_else(|| {
            output
                .lines()
                .rev()
                .map(str::trim)
                .filter(|l| l.starts_with('{'))
                .find_map(|l| decode(task, l))
        })
        .ok_or_else(|| {
            let other = match task {
                Task::CirclePacking => Task::MinMaxDist,
                _ => Task::CirclePacking,
            };
            let looks_like_other = decode(other, output.trim()).is_some()
                || output.lines().any(|l| decode(other, l.trim()).is_some());
            if looks_like_other {
                WireError::Shape { task }
            } else {
                WireError::NoRecord
            }
        })?;

    let expected = task.arity();
    let (got, finite) = match &config {
        Configuration::Packing(p) => {
            let got = if p.centers.len() != expected {
                p.centers.len()
            } else {
                p.radii.len()
            };
            let finite = p.centers.iter().flatten().chain(&p.radii).all(|v| v.is_finite());
            (got, finite)
        }
        Configuration::Points(p) => (
            p.points.len(),
            p.points.iter().flatten().all(|v| v.is_finite()),
        ),
    };
    if got != expected {
        return Err(WireError::Arity { expected, got });
    }
    if !finite {
        return Err(WireError::NonFinite);
    }
    Ok(config)
}
