//! Tetrahedral quadrature refined towards point singularities.

use crate::geometry::Vec3;

const A: f64 = 0.585_410_196_624_968_5;
const B: f64 = 0.138_196_601_125_010_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveRule {
    /// Split while the tet diameter exceeds `ratio` times its distance to the nearest pole.
    pub ratio: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveRule {
    fn default() -> Self {
        Self {
            ratio: 0.5,
            max_depth: 6,
        }
    }
}

fn volume(p: &[Vec3; 4]) -> f64 {
    ((p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0).abs()
}

fn diameter(p: &[Vec3; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((p[i] - p[j]).norm());
        }
    }
    d
}

/// Degree-2 four-point rule.
pub fn tet_points(p: &[Vec3; 4]) -> [(Vec3, f64); 4] {
    let w = volume(p) / 4.0;
    std::array::from_fn(|k| {
        let mut x = Vec3::zeros();
        for (i, q) in p.iter().enumerate() {
            x += q * if i == k { A } else { B };
        }
        (x, w)
    })
}

/// The eight children of the regular red refinement.
fn children(p: &[Vec3; 4]) -> [[Vec3; 4]; 8] {
    let m = |i: usize, j: usize| (p[i] + p[j]) * 0.5;
    let (m01, m02, m03, m12, m13, m23) = (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
    [
        [p[0], m01, m02, m03],
        [m01, p[1], m12, m13],
        [m02, m12, p[2], m23],
        [m03, m13, m23, p[3]],
        [m01, m02, m03, m13],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ]
}

/// Calls `visit(x, w)` for every quadrature point of `p`, refined near `poles`.
pub fn visit(
    p: &[Vec3; 4],
    poles: &[Vec3],
    rule: &AdaptiveRule,
    visit: &mut impl FnMut(&Vec3, f64),
) {
    visit_depth(p, poles, rule, 0, visit);
}

fn visit_depth(
    p: &[Vec3; 4],
    poles: &[Vec3],
    rule: &AdaptiveRule,
    depth: usize,
    f: &mut impl FnMut(&Vec3, f64),
) {
    let diam = diameter(p);
    let c = (p[0] + p[1] + p[2] + p[3]) / 4.0;
    let near = poles
        .iter()
        .map(|y| ((c - y).norm() - diam).max(0.0))
        .fold(f64::INFINITY, f64::min);
    if depth < rule.max_depth && diam > rule.ratio * near {
        for ch in children(p) {
            visit_depth(&ch, poles, rule, depth + 1, f);
        }
        return;
    }
    for (x, w) in tet_points(p) {
        f(&x, w);
    }
}
