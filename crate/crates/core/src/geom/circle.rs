use serde::{Deserialize, Serialize};

use super::{FitnessScore, InputError, Point, Violation};

pub const CP_CIRCLES: usize = 26;
/// Best published sum of radii for 26 circles.
pub const CP_NORMALIZER: f64 = 2.635;
/// Default slack on overlap and containment checks.
pub const CP_TOLERANCE: f64 = 1e-9;

/// 26 circles in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirclePacking {
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
}

impl CirclePacking {
    pub fn new(centers: Vec<Point>, radii: Vec<f64>) -> Self {
        Self { centers, radii }
    }

    pub fn sum_radii(&self) -> f64 {
        self.radii.iter().sum()
    }

    /// Copy with every radius multiplied by `s`.
    pub fn scaled_radii(&self, s: f64) -> Self {
        Self {
            centers: self.centers.clone(),
            radii: self.radii.iter().map(|r| r * s).collect(),
        }
    }
}

/// Sum of radii over 2.635, or 0 with every failed constraint listed.
pub fn eval_circle_packing(packing: &CirclePacking, tol: f64) -> Result<FitnessScore, InputError> {
    let n = packing.centers.len();
    if n != CP_CIRCLES {
        return Err(InputError::WrongCount {
            what: "centers",
            expected: CP_CIRCLES,
            got: n,
        });
    }
    if packing.radii.len() != CP_CIRCLES {
        return Err(InputError::WrongCount {
            what: "radii",
            expected: CP_CIRCLES,
            got: packing.radii.len(),
        });
    }
    super::check_points(&packing.centers, CP_CIRCLES)?;
    if let Some(index) = packing.radii.iter().position(|r| !r.is_finite()) {
        return Err(InputError::NonFinite {
            what: "radius",
            index,
        });
    }

    let mut violations = Vec::new();
    for (index, (&[x, y], &r)) in packing.centers.iter().zip(&packing.radii).enumerate() {
        if r <= 0.0 {
            violations.push(Violation::NonPositiveRadius { index });
        }
        let inside = x - r >= -tol && x + r <= 1.0 + tol && y - r >= -tol && y + r <= 1.0 + tol;
        if !inside {
            violations.push(Violation::OutsideSquare { index });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let [xi, yi] = packing.centers[i];
            let [xj, yj] = packing.centers[j];
            let dist = (xi - xj).hypot(yi - yj);
            let reach = packing.radii[i] + packing.radii[j];
            if dist < reach - tol {
                violations.push(Violation::Overlap {
                    i,
                    j,
                    depth: reach - dist,
                });
            }
        }
    }

    if violations.is_empty() {
        Ok(FitnessScore::valid(packing.sum_radii() / CP_NORMALIZER))
    } else {
        Ok(FitnessScore::invalid(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> CirclePacking {
        let r = 1.0 / 52.0;
        let centers = (1..=26)
            .map(|i| [(2.0 * i as f64 - 1.0) / 52.0, 0.5])
            .collect();
        CirclePacking::new(centers, vec![r; 26])
    }

    #[test]
    fn touching_row_scores_half_over_normalizer() {
        let score = eval_circle_packing(&row(), CP_TOLERANCE).unwrap();
        assert!(score.is_valid());
        assert!((score.value - 0.5 / 2.635).abs() < 1e-15);
        assert!((score.value - 0.18975).abs() < 1e-5);
    }

    #[test]
    fn overlap_and_containment_are_listed() {
        let mut p = row();
        p.radii[0] = 0.03;
        p.centers[25] = [1.2, 0.5];
        let score = eval_circle_packing(&p, CP_TOLERANCE).unwrap();
        assert_eq!(score.value, 0.0);
        assert!(score
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { i: 0, j: 1, .. })));
        assert!(score
            .violations
            .contains(&Violation::OutsideSquare { index: 25 }));
    }

    #[test]
    fn zero_radius_is_a_violation() {
        let mut p = row();
        p.radii[3] = 0.0;
        let score = eval_circle_packing(&p, CP_TOLERANCE).unwrap();
        assert_eq!(score.value, 0.0);
        assert!(score
            .violations
            .contains(&Violation::NonPositiveRadius { index: 3 }));
    }

    #[test]
    fn malformed_input_errors() {
        let mut p = row();
        p.radii.pop();
        assert!(matches!(
            eval_circle_packing(&p, CP_TOLERANCE),
            Err(InputError::WrongCount { what: "radii", .. })
        ));
        let mut p = row();
        p.centers[2][1] = f64::NAN;
        assert!(matches!(
            eval_circle_packing(&p, CP_TOLERANCE),
            Err(InputError::NonFinite { index: 2, .. })
        ));
        let mut p = row();
        p.radii[4] = f64::INFINITY;
        assert!(eval_circle_packing(&p, CP_TOLERANCE).is_err());
    }

    #[test]
    fn shrinking_scales_value() {
        let p = row();
        let base = eval_circle_packing(&p, CP_TOLERANCE).unwrap().value;
        let shrunk = eval_circle_packing(&p.scaled_radii(0.4), CP_TOLERANCE).unwrap();
        assert!(shrunk.is_valid());
        assert!((shrunk.value - 0.4 * base).abs() < 1e-15);
    }
}
