//! Evaluators for the three geometric benchmark tasks.
//!
//! Each evaluator takes a direct geometric configuration and returns a
//! normalized [`FitnessScore`], where 1.0 matches the best published
//! construction. Well-formed configurations that break a constraint score 0
//! and carry the list of violated constraints; malformed input (wrong arity,
//! non-finite coordinates) is an [`InputError`] instead.

mod circle;
mod heilbronn;
mod minmax;
mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use circle::{eval_circle_packing, CirclePacking, CP_CIRCLES, CP_NORMALIZER, CP_TOLERANCE};
pub use heilbronn::{
    eval_heilbronn, triangle_area, HT_POINTS, HT_REFERENCE, HT_TOLERANCE, TRIANGLE_AREA,
    TRIANGLE_VERTICES,
};
pub use minmax::{eval_minmaxdist, MMD_NORMALIZER, MMD_POINTS};
pub use wire::{parse_configuration, WireError};

/// A planar point `[x, y]`.
pub type Point = [f64; 2];

/// The benchmark tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "cp")]
    CirclePacking,
    #[serde(rename = "mmd")]
    MinMaxDist,
    #[serde(rename = "ht")]
    Heilbronn,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::CirclePacking, Task::MinMaxDist, Task::Heilbronn];

    /// Short identifier used in file names, templates and reports.
    pub fn key(self) -> &'static str {
        match self {
            Task::CirclePacking => "cp",
            Task::MinMaxDist => "mmd",
            Task::Heilbronn => "ht",
        }
    }

    /// Number of circles or points a configuration must contain.
    pub fn arity(self) -> usize {
        match self {
            Task::CirclePacking => CP_CIRCLES,
            Task::MinMaxDist => MMD_POINTS,
            Task::Heilbronn => HT_POINTS,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cp" | "circle_packing" | "circle-packing" => Ok(Task::CirclePacking),
            "mmd" | "minmaxdist" | "min_max_dist" => Ok(Task::MinMaxDist),
            "ht" | "heilbronn" | "heilbronn_triangle" => Ok(Task::Heilbronn),
            other => Err(format!("unknown task `{other}` (expected cp, mmd or ht)")),
        }
    }
}

/// A set of planar points (16 for MinMaxDist, 11 for Heilbronn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }
}

/// A candidate configuration in the wire format a candidate program prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Configuration {
    Packing(CirclePacking),
    Points(PointSet),
}

/// A constraint broken by an otherwise well-formed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveRadius { index: usize },
    OutsideSquare { index: usize },
    Overlap { i: usize, j: usize, depth: f64 },
    CoincidentPoints { i: usize, j: usize },
    OutsideTriangle { index: usize, distance: f64 },
    WrongShape { expected: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveRadius { index } => write!(f, "radius {index} is not positive"),
            Violation::OutsideSquare { index } => {
                write!(f, "circle {index} is not contained in the unit square")
            }
            Violation::Overlap { i, j, depth } => {
                write!(f, "circles {i} and {j} overlap by {depth:.3e}")
            }
            Violation::CoincidentPoints { i, j } => write!(f, "points {i} and {j} coincide"),
            Violation::OutsideTriangle { index, distance } => {
                write!(f, "point {index} lies {distance:.3e} outside the triangle")
            }
            Violation::WrongShape { expected } => {
                write!(f, "configuration does not have the {expected} shape")
            }
        }
    }
}

/// Normalized fitness plus every violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessScore {
    pub value: f64,
    pub violations: Vec<Violation>,
}

impl FitnessScore {
    pub fn valid(value: f64) -> Self {
        Self {
            value,
            violations: Vec::new(),
        }
    }

    pub fn invalid(violations: Vec<Violation>) -> Self {
        debug_assert!(!violations.is_empty());
        Self {
            value: 0.0,
            violations,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Malformed evaluator input, distinct from a valid-but-violating configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("expected {expected} {what}, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {what} {index}")]
    NonFinite { what: &'static str, index: usize },
}

/// Per-task tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Overlap and containment slack for circle packing.
    pub cp_tolerance: f64,
    /// Half-plane slack for Heilbronn containment.
    pub ht_tolerance: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cp_tolerance: CP_TOLERANCE,
            ht_tolerance: HT_TOLERANCE,
        }
    }
}

/// Scores a configuration for `task`.
///
/// A configuration of the wrong shape for the task (points for circle
/// packing, or a packing for a point task) scores 0 with a
/// [`Violation::WrongShape`].
pub fn evaluate(
    task: Task,
    config: &Configuration,
    opts: &EvalOptions,
) -> Result<FitnessScore, InputError> {
    match (task, config) {
        (Task::CirclePacking, Configuration::Packing(p)) => {
            eval_circle_packing(p, opts.cp_tolerance)
        }
        (Task::MinMaxDist, Configuration::Points(p)) => eval_minmaxdist(p),
        (Task::Heilbronn, Configuration::Points(p)) => eval_heilbronn(p, opts.ht_tolerance),
        (Task::CirclePacking, _) => Ok(FitnessScore::invalid(vec![Violation::WrongShape {
            expected: "centers/radii".into(),
        }])),
        (_, _) => Ok(FitnessScore::invalid(vec![Violation::WrongShape {
            expected: "points".into(),
        }])),
    }
}

pub(crate) fn check_points(points: &[Point], expected: usize) -> Result<(), InputError> {
    if points.len() != expected {
        return Err(InputError::WrongCount {
            what: "points",
            expected,
            got: points.len(),
        });
    }
    for (index, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(InputError::NonFinite {
                what: "point",
                index,
            });
        }
    }
    Ok(())
}
