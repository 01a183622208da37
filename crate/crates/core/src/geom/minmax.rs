use super::{FitnessScore, InputError, PointSet, Violation};

pub const MMD_POINTS: usize = 16;
/// Reciprocal of the best published squared min/max distance ratio.
pub const MMD_NORMALIZER: f64 = 12.889266112;

/// `(d_min / d_max)^2 * 12.889266112` over all pairs.
///
/// Coincident points give `d_min = 0` and score 0.
pub fn eval_minmaxdist(points: &PointSet) -> Result<FitnessScore, InputError> {
    let pts = &points.points;
    super::check_points(pts, MMD_POINTS)?;

    let mut min_sq = f64::INFINITY;
    let mut max_sq = 0.0_f64;
    let mut closest = (0, 1);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dx = pts[i][0] - pts[j][0];
            let dy = pts[i][1] - pts[j][1];
            let d2 = dx * dx + dy * dy;
            if d2 < min_sq {
                min_sq = d2;
                closest = (i, j);
            }
            max_sq = max_sq.max(d2);
        }
    }
    if min_sq == 0.0 {
        let (i, j) = closest;
        return Ok(FitnessScore::invalid(vec![Violation::CoincidentPoints {
            i,
            j,
        }]));
    }
    Ok(FitnessScore::valid(min_sq / max_sq * MMD_NORMALIZER))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PointSet {
        PointSet::new(
            (0..16)
                .map(|k| [(k % 4) as f64, (k / 4) as f64])
                .collect(),
        )
    }

    #[test]
    fn square_grid_value() {
        // d_min = 1, d_max = 3*sqrt(2)
        let v = eval_minmaxdist(&grid()).unwrap().value;
        assert!((v - MMD_NORMALIZER / 18.0).abs() < 1e-14);
    }

    #[test]
    fn coincident_pair_scores_zero() {
        let mut p = grid();
        p.points[7] = p.points[3];
        let s = eval_minmaxdist(&p).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.violations, vec![Violation::CoincidentPoints { i: 3, j: 7 }]);
    }

    #[test]
    fn arity_and_finiteness() {
        let mut p = grid();
        p.points.pop();
        assert!(matches!(
            eval_minmaxdist(&p),
            Err(InputError::WrongCount { expected: 16, got: 15, .. })
        ));
        let mut p = grid();
        p.points[0][0] = f64::NEG_INFINITY;
        assert!(eval_minmaxdist(&p).is_err());
    }
}
