use serde::{Deserialize, Serialize};

use super::fit::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerReason {
    /// `c = 0`: the gap is linear in `ln T` along the budget line.
    NoInteraction,
    /// `c > 0`: the vertex minimizes fitness.
    VertexIsMinimum,
    /// The fitness-maximizing vertex lies outside `[1, C]`.
    VertexOutside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum DepthOptimum {
    Interior {
        t_star: f64,
        log_t_star: f64,
    },
    Corner {
        /// Best endpoint: 1 or C.
        t: f64,
        /// Unconstrained vertex `ln T*`, when one exists.
        log_vertex: Option<f64>,
        reason: CornerReason,
    },
}

impl DepthOptimum {
    /// The depth to use: `T*` when interior, else the best corner.
    pub fn depth(&self) -> f64 {
        match *self {
            DepthOptimum::Interior { t_star, .. } => t_star,
            DepthOptimum::Corner { t, .. } => t,
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, DepthOptimum::Interior { .. })
    }
}

/// Fitted log-gap along the budget line `ln N = ln C - ln T`.
pub fn log_gap_on_budget(fit: &FitResult, log_c: f64, log_t: f64) -> f64 {
    let log_n = log_c - log_t;
    fit.beta0 + fit.a * log_t + fit.b * log_n + fit.c * log_t * log_n
}

/// Vertex `ln T* = (a - b) / (2c) + ln C / 2` of the fitted surface along a
/// fixed budget.
pub fn optimal_depth(fit: &FitResult, c: f64) -> DepthOptimum {
    let log_c = c.ln();
    let corner = |log_vertex, reason| {
        let at_one = log_gap_on_budget(fit, log_c, 0.0);
        let at_c = log_gap_on_budget(fit, log_c, log_c);
        DepthOptimum::Corner {
            t: if at_c < at_one { c } else { 1.0 },
            log_vertex,
            reason,
        }
    };
    if fit.c == 0.0 {
        return corner(None, CornerReason::NoInteraction);
    }
    let offset = (fit.a - fit.b) / (2.0 * fit.c);
    let log_t = offset + log_c / 2.0;
    if fit.c > 0.0 {
        return corner(Some(log_t), CornerReason::VertexIsMinimum);
    }
    if !(0.0..=log_c).contains(&log_t) {
        return corner(Some(log_t), CornerReason::VertexOutside);
    }
    DepthOptimum::Interior {
        // Factored so that a = b gives sqrt(C) exactly.
        t_star: offset.exp() * c.sqrt(),
        log_t_star: log_t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "halfwidth", rename_all = "snake_case")]
pub enum Plateau {
    /// Half-width in `ln T` units.
    Finite(f64),
    /// `c = 0`: the log-gap is flat to second order everywhere.
    Infinite,
}

/// Radius `sqrt(delta / |c|)` in `ln T` within which the log-gap stays
/// within `delta` of its vertex value.
pub fn plateau_halfwidth(fit: &FitResult, delta: f64) -> Plateau {
    assert!(delta > 0.0, "plateau tolerance must be positive");
    if fit.c == 0.0 {
        Plateau::Infinite
    } else {
        Plateau::Finite((delta / fit.c.abs()).sqrt())
    }
}
