use super::{FitnessScore, InputError, Point, PointSet, Violation};

pub const HT_POINTS: usize = 11;
/// Best published normalized minimum triangle area for 11 points.
pub const HT_REFERENCE: f64 = 0.036529889880030156;
/// Containment slack applied to each half-plane signed distance.
pub const HT_TOLERANCE: f64 = 1e-6;

const SQRT3: f64 = 1.732_050_807_568_877_2;

pub const TRIANGLE_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2.0]];
/// Area of the container, `sqrt(3) / 4`.
pub const TRIANGLE_AREA: f64 = SQRT3 / 4.0;

/// Unsigned area of the triangle `abc`.
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    0.5 * cross.abs()
}

/// Signed distances to the three edges, positive inside.
fn edge_distances([x, y]: Point) -> [f64; 3] {
    [y, (SQRT3 * x - y) / 2.0, (SQRT3 * (1.0 - x) - y) / 2.0]
}

/// Smallest of the 165 triangle areas over the container area, divided by
/// the reference; 0 if any point is outside the container.
pub fn eval_heilbronn(points: &PointSet, tol: f64) -> Result<FitnessScore, InputError> {
    let pts = &points.points;
    super::check_points(pts, HT_POINTS)?;

    let violations: Vec<Violation> = pts
        .iter()
        .enumerate()
        .filter_map(|(index, &p)| {
            let worst = edge_distances(p).into_iter().fold(f64::INFINITY, f64::min);
            (worst < -tol).then_some(Violation::OutsideTriangle {
                index,
                distance: -worst,
            })
        })
        .collect();
    if !violations.is_empty() {
        return Ok(FitnessScore::invalid(violations));
    }

    let n = pts.len();
    let mut min_area = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                min_area = min_area.min(triangle_area(pts[i], pts[j], pts[k]));
            }
        }
    }
    Ok(FitnessScore::valid(min_area / TRIANGLE_AREA / HT_REFERENCE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread() -> PointSet {
        PointSet::new(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.5, SQRT3 / 2.0],
            [0.31, 0.05],
            [0.68, 0.07],
            [0.2, 0.22],
            [0.83, 0.19],
            [0.45, 0.31],
            [0.58, 0.48],
            [0.39, 0.6],
            [0.52, 0.14],
        ])
    }

    #[test]
    fn collinear_triple_scores_zero() {
        let mut p = spread();
        p.points[3] = [0.5, 0.1];
        p.points[4] = [0.5, 0.2];
        p.points[10] = [0.5, 0.3];
        let s = eval_heilbronn(&p, HT_TOLERANCE).unwrap();
        assert!(s.is_valid());
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn outside_point_is_violation() {
        let mut p = spread();
        p.points[5] = [0.5, -1e-5];
        let s = eval_heilbronn(&p, HT_TOLERANCE).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(matches!(
            s.violations[0],
            Violation::OutsideTriangle { index: 5, .. }
        ));
    }

    #[test]
    fn within_slack_is_accepted() {
        let mut p = spread();
        p.points[5] = [0.5, -5e-7];
        assert!(eval_heilbronn(&p, HT_TOLERANCE).unwrap().is_valid());
    }

    #[test]
    fn initial_zero_points_score_zero() {
        let p = PointSet::new(vec![[0.0, 0.0]; 11]);
        let s = eval_heilbronn(&p, HT_TOLERANCE).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn arity_error() {
        let p = PointSet::new(vec![[0.1, 0.1]; 12]);
        assert!(matches!(
            eval_heilbronn(&p, HT_TOLERANCE),
            Err(InputError::WrongCount { expected: 11, got: 12, .. })
        ));
    }
}
