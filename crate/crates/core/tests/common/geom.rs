//! Geometry fixtures and independent evaluator oracles.

use std::f64::consts::PI;

use evobudget::geom::{CirclePacking, PointSet, CP_NORMALIZER, HT_REFERENCE, MMD_NORMALIZER};
use rand::Rng;

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// 5 points on an inner circle, 11 on an outer circle of radius
/// `r (1 + 2 sin(pi/5))`.
pub fn mmd_five_eleven(phase: f64) -> PointSet {
    let r = 1.0;
    let big = r * (1.0 + 2.0 * (PI / 5.0).sin());
    let mut pts = Vec::new();
    for i in 0..5 {
        let t = phase + 2.0 * PI * i as f64 / 5.0;
        pts.push([r * t.cos(), r * t.sin()]);
    }
    for i in 0..11 {
        let t = 2.0 * PI * i as f64 / 11.0;
        pts.push([big * t.cos(), big * t.sin()]);
    }
    PointSet::new(pts)
}

/// A valid 26-circle packing whose radii sum to exactly 2.635.
pub fn cp_reference() -> CirclePacking {
    let text = include_str!("../fixtures/cp26.json");
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    let centers = serde_json::from_value(v["centers"].clone()).unwrap();
    let radii = serde_json::from_value(v["radii"].clone()).unwrap();
    CirclePacking::new(centers, radii)
}

// Independent oracles.

pub fn oracle_cp(p: &CirclePacking, tol: f64) -> f64 {
    let n = p.radii.len();
    for k in 0..n {
        let [x, y] = p.centers[k];
        let r = p.radii[k];
        if r <= 0.0 || x.min(y).min(1.0 - x).min(1.0 - y) < r - tol {
            return 0.0;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let dx = p.centers[i][0] - p.centers[j][0];
            let dy = p.centers[i][1] - p.centers[j][1];
            let need = p.radii[i] + p.radii[j] - tol;
            if need > 0.0 && dx * dx + dy * dy < need * need {
                return 0.0;
            }
        }
    }
    p.radii.iter().fold(0.0, |a, r| a + r) / CP_NORMALIZER
}

pub fn oracle_mmd(p: &PointSet) -> f64 {
    let mut lo = f64::MAX;
    let mut hi = 0.0f64;
    for (i, a) in p.points.iter().enumerate() {
        for b in &p.points[..i] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    if lo == 0.0 {
        return 0.0;
    }
    (lo / hi).powi(2) * MMD_NORMALIZER
}

pub fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn oracle_ht(p: &PointSet, tol: f64) -> f64 {
    let height = SQRT3 / 2.0;
    for &[x, y] in &p.points {
        // Barycentric coordinates w.r.t. (0,0), (1,0), (1/2, h).
        let l3 = y / height;
        let l2 = x - 0.5 * l3;
        let l1 = 1.0 - l2 - l3;
        // Each coordinate times the height is the distance to the opposite edge.
        if l1.min(l2).min(l3) * height < -tol {
            return 0.0;
        }
    }
    let n = p.points.len();
    let mut best = f64::MAX;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let [a, b, c] = [p.points[i], p.points[j], p.points[k]];
                let area = 0.5 * det3([[a[0], a[1], 1.0], [b[0], b[1], 1.0], [c[0], c[1], 1.0]]).abs();
                best = best.min(area);
            }
        }
    }
    best / (SQRT3 / 4.0) / HT_REFERENCE
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

pub fn triangle_point(rng: &mut impl Rng) -> [f64; 2] {
    let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    [u + 0.5 * v, SQRT3 / 2.0 * v]
}

/// Random centers with radii shrunk until (mostly) feasible, plus some
/// deliberately infeasible perturbations.
pub fn random_packing(rng: &mut impl Rng) -> CirclePacking {
    let centers: Vec<[f64; 2]> = (0..26)
        .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    let mut radii: Vec<f64> = centers
        .iter()
        .map(|&[x, y]| x.min(y).min(1.0 - x).min(1.0 - y))
        .collect();
    for i in 0..26 {
        for j in 0..i {
            let d = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            if radii[i] + radii[j] > d {
                let s = d / (radii[i] + radii[j]);
                radii[i] *= s;
                radii[j] *= s;
            }
        }
    }
    let shrink = rng.random_range(0.9..1.02);
    CirclePacking::new(centers, radii.iter().map(|r| r * shrink).collect())
}

