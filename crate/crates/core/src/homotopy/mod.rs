//! The vector field 𝒰 deforming one polyhedron onto a nearby one and the
//! maps Φₜ = Id + t𝒰.
//!
//! On ∂D₀ the field is piecewise affine: on every flap triangle and on a
//! triangulation of the rest of each face it interpolates the vertex, apex and
//! image displacements. Off the boundary each component is extended by
//! `min_T (u(π_T x) + L |x − π_T x|)` over the boundary pieces, which is
//! Lipschitz and exact on ∂D₀ once L bounds the boundary slope, and then cut
//! off with η(dist(x, ∂D₀)).

mod face_map;

pub use face_map::{build_face_map, flap_affine, AffinePiece, FaceCase, FaceMap};

use crate::geometry::{closest_point_triangle, triangle_lattice, BoxDomain, Mat3, Vec3};
use crate::polyhedra::{
    flap_triangles, hausdorff_boundary, match_vertices, AdmissibilityParams, FlapError, MatchError,
    Polyhedron, VertexPairing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Flap(#[from] FlapError),
    #[error("face {face}: planes meet at sin φ = {sin}, above {limit}")]
    Regime { face: usize, sin: f64, limit: f64 },
    #[error("face {face}: no flap on edge {edge}")]
    MissingFlap { face: usize, edge: usize },
    #[error("face {face}: degenerate affine piece")]
    Degenerate { face: usize },
    #[error(
        "gradient bound {bound} exceeds 1/3; the pair is outside the small-deformation regime"
    )]
    Lipschitz { bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopyOptions {
    pub delta0: f64,
    pub c4: f64,
    /// Largest admissible sine of the angle between paired face planes.
    pub max_sin: f64,
    /// Factor applied to the measured boundary slope to get the extension constant.
    pub slope_factor: f64,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            delta0: 0.05,
            c4: 10.0,
            max_sin: 0.5,
            slope_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Piece {
    origin: [f64; 3],
    value: [f64; 3],
    gradient: [[f64; 3]; 3],
    tri: [[f64; 3]; 3],
}

impl Piece {
    fn eval(&self, q: &Vec3) -> Vec3 {
        let g = Mat3::from_row_slice(&self.gradient.concat());
        Vec3::from(self.value) + g * (q - Vec3::from(self.origin))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HomotopyField {
    pub r0: f64,
    pub d_h: f64,
    /// Cutoff breakpoints: η = 1 below the first, 0 beyond the second.
    pub cutoff: [f64; 2],
    /// Per-component extension constants.
    pub slopes: [f64; 3],
    pub pairing: VertexPairing,
    pub face_maps: Vec<FaceMap>,
    /// A priori bound for the operator norm of D𝒰.
    pub gradient_bound: f64,
    pieces: Vec<Piece>,
    support: BoxDomain,
}

impl HomotopyField {
    pub fn eta(&self, d: f64) -> f64 {
        let [a, b] = self.cutoff;
        if d <= a {
            1.0
        } else if d >= b {
            0.0
        } else {
            (b - d) / (b - a)
        }
    }

    /// 𝒰(x).
    pub fn displacement(&self, x: &Vec3) -> Vec3 {
        if !self.support.contains(x) {
            return Vec3::zeros();
        }
        let mut dist = f64::INFINITY;
        let mut best = Vec3::repeat(f64::INFINITY);
        for p in &self.pieces {
            let [a, b, c] = p.tri.map(Vec3::from);
            let q = closest_point_triangle(x, &a, &b, &c);
            let d = (x - q).norm();
            dist = dist.min(d);
            let u = p.eval(&q);
            for k in 0..3 {
                best[k] = best[k].min(u[k] + self.slopes[k] * d);
            }
        }
        let psi = self.eta(dist);
        if psi == 0.0 {
            Vec3::zeros()
        } else {
            best * psi
        }
    }

    /// D𝒰(x) by central differences, `(i, j)` = ∂ⱼ𝒰ᵢ.
    pub fn gradient(&self, x: &Vec3) -> Mat3 {
        let s = 1e-6 * self.r0;
        let mut g = Mat3::zeros();
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = s;
            let d = (self.displacement(&(x + e)) - self.displacement(&(x - e))) / (2.0 * s);
            g.set_column(j, &d);
        }
        g
    }

    pub fn phi(&self, t: f64, x: &Vec3) -> Vec3 {
        x + self.displacement(x) * t
    }

    pub fn jacobian(&self, t: f64, x: &Vec3) -> Mat3 {
        Mat3::identity() + self.gradient(x) * t
    }

    pub fn map(&self, t: f64) -> HomotopyMap<'_> {
        HomotopyMap { field: self, t }
    }

    /// Boundary pieces of ∂D₀ as triangles with their affine displacements.
    pub fn pieces(&self) -> impl Iterator<Item = &AffinePiece> {
        self.face_maps.iter().flat_map(|f| f.pieces.iter())
    }

    /// Neighbourhood of ∂D₀ outside of which 𝒰 vanishes, as a box cover.
    pub fn support_box(&self) -> BoxDomain {
        self.support
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field serializes")
    }
}

/// Φₜ for a fixed t.
#[derive(Debug, Clone, Copy)]
pub struct HomotopyMap<'a> {
    pub field: &'a HomotopyField,
    pub t: f64,
}

impl HomotopyMap<'_> {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.field.phi(self.t, x)
    }

    pub fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.field.jacobian(self.t, x)
    }
}

/// 𝒰 taking P₀ onto P₁. Fails outside the regime where the vertices pair up
/// and D𝒰 stays below 1/3.
pub fn build_field(
    p0: &Polyhedron,
    p1: &Polyhedron,
    params: &AdmissibilityParams,
    opts: &HomotopyOptions,
) -> Result<HomotopyField, HomotopyError> {
    let r0 = params.r0;
    let d_h = hausdorff_boundary(p0, p1, r0 / 512.0).value();
    let pairing = match_vertices(p0, p1, d_h, r0, opts.delta0, opts.c4)?;
    let flaps0 = flap_triangles(p0, params)?;
    let flaps1 = flap_triangles(p1, params)?;
    let face_maps = (0..p0.faces().len())
        .map(|f| build_face_map(p0, p1, f, &pairing, &flaps0, &flaps1, opts.max_sin))
        .collect::<Result<Vec<_>, _>>()?;

    let all: Vec<&AffinePiece> = face_maps.iter().flat_map(|f| f.pieces.iter()).collect();
    let pieces: Vec<Piece> = all
        .iter()
        .map(|p| {
            let g = p.gradient();
            Piece {
                origin: p.source[0],
                value: p.displacements()[0].into(),
                gradient: std::array::from_fn(|i| std::array::from_fn(|j| g[(i, j)])),
                tri: p.source,
            }
        })
        .collect();

    // boundary slope per component: piece gradients and chords between piece vertices
    let mut slope = [0.0f64; 3];
    for p in &all {
        let g = p.gradient();
        for k in 0..3 {
            slope[k] = slope[k].max(g.row(k).norm());
        }
    }
    let nodes: Vec<(Vec3, Vec3)> = all
        .iter()
        .flat_map(|p| {
            let d = p.displacements();
            (0..3).map(move |i| (Vec3::from(p.source[i]), d[i]))
        })
        .collect();
    for (i, (x, u)) in nodes.iter().enumerate() {
        for (y, w) in &nodes[i + 1..] {
            let len = (x - y).norm();
            if len > 1e-12 * r0 {
                for k in 0..3 {
                    slope[k] = slope[k].max((u[k] - w[k]).abs() / len);
                }
            }
        }
    }
    let slopes = slope.map(|s| s * opts.slope_factor);

    let cutoff = [r0 / 8.0, r0 / 4.0];
    let umax = nodes
        .iter()
        .fold(Vec3::zeros(), |m, (_, u)| m.zip_map(&u.abs(), f64::max));
    let gradient_bound = (0..3)
        .map(|k| {
            let ext = umax[k] + slopes[k] * cutoff[1];
            (2.0 * slopes[k] + ext / (cutoff[1] - cutoff[0])).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if gradient_bound > 1.0 / 3.0 {
        return Err(HomotopyError::Lipschitz {
            bound: gradient_bound,
        });
    }
    Ok(HomotopyField {
        r0,
        d_h,
        cutoff,
        slopes,
        pairing,
        face_maps,
        gradient_bound,
        pieces,
        support: p0.bounding_box().expanded(cutoff[1]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    /// Allowed distance of Φ₁(∂D₀) samples from ∂D₁, as a fraction of d_H.
    pub face_fraction: f64,
    pub t_values: [f64; 4],
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            pairs: 2_000,
            seed: 7,
            face_fraction: 0.1,
            t_values: [0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyReport {
    pub d_h: f64,
    pub vertex_residual: f64,
    pub face_residual: f64,
    pub face_tolerance: f64,
    pub injectivity_ratio: f64,
    pub det_range: [f64; 2],
    pub jacobian_norm: f64,
    pub inverse_norm: f64,
    /// Largest excess of |det DΦₜ − 1 − t div 𝒰| over 6t²|D𝒰|² + 6t³|D𝒰|³.
    pub expansion_excess: f64,
    pub sup_u: f64,
    pub sup_du: f64,
    /// (‖𝒰‖∞ + r₀‖D𝒰‖∞)/d_H.
    pub c_tilde: f64,
    pub samples: usize,
}

impl HomotopyReport {
    pub fn failures(&self, r0: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.vertex_residual > 1e-12 * r0 {
            out.push(format!("vertex residual {:e}", self.vertex_residual));
        }
        if self.face_residual > self.face_tolerance {
            out.push(format!(
                "face residual {:e} above {:e}",
                self.face_residual, self.face_tolerance
            ));
        }
        if self.injectivity_ratio < 0.5 {
            out.push(format!("injectivity ratio {}", self.injectivity_ratio));
        }
        if self.det_range[0] < 0.5 || self.det_range[1] > 1.5 {
            out.push(format!("det range {:?}", self.det_range));
        }
        if self.jacobian_norm > 3f64.sqrt() + 1.0 / 3.0 {
            out.push(format!("|DΦ| = {}", self.jacobian_norm));
        }
        if self.inverse_norm > 1.5 {
            out.push(format!("|DΦ⁻¹| = {}", self.inverse_norm));
        }
        if self.expansion_excess > 1e-8 {
            out.push(format!("det expansion excess {:e}", self.expansion_excess));
        }
        out
    }

    pub fn passed(&self, r0: f64) -> bool {
        self.failures(r0).is_empty()
    }
}

/// Sample points concentrated near ∂D₀: half at random normal offsets from
/// boundary points, half uniform in the support box.
pub fn sample_points(field: &HomotopyField, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let pieces: Vec<&AffinePiece> = field.pieces().collect();
    let w = field.cutoff[1];
    let b = field.support;
    (0..n)
        .map(|i| {
            if i % 2 == 0 && !pieces.is_empty() {
                let p = pieces[rng.random_range(0..pieces.len())];
                let [a, bb, c] = p.source_points();
                let (mut s, mut t) = (rng.random::<f64>(), rng.random::<f64>());
                if s + t > 1.0 {
                    (s, t) = (1.0 - s, 1.0 - t);
                }
                let x = a + (bb - a) * s + (c - a) * t;
                let n = (bb - a).cross(&(c - a)).normalize();
                x + n * rng.random_range(-w..w)
            } else {
                Vec3::from_fn(|k, _| rng.random_range(b.lo[k]..b.hi[k]))
            }
        })
        .collect()
}

/// Checks of Φ₁(D₀) = D₁ and of the Jacobian bounds on sampled points.
pub fn verify_homotopy(
    p0: &Polyhedron,
    p1: &Polyhedron,
    field: &HomotopyField,
    opts: &VerifyOptions,
) -> HomotopyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vertex_residual = p0
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| (field.phi(1.0, v) - p1.vertices()[field.pairing.map[i]]).norm())
        .fold(0.0, f64::max);

    let mut face_residual: f64 = 0.0;
    let mut boundary = Vec::new();
    for piece in field.pieces() {
        boundary.extend(triangle_lattice(&piece.source_points(), 4));
    }
    for x in &boundary {
        face_residual = face_residual.max(p1.boundary_distance(&field.phi(1.0, x)));
    }

    let pts = sample_points(field, opts.samples, &mut rng);
    let mut det_range = [f64::INFINITY, f64::NEG_INFINITY];
    let (mut jacobian_norm, mut inverse_norm, mut expansion_excess) =
        (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let (mut sup_u, mut sup_du) = (0.0f64, 0.0f64);
    for x in pts.iter().chain(&boundary) {
        sup_u = sup_u.max(field.displacement(x).norm());
        let g = field.gradient(x);
        let gn = g.norm();
        sup_du = sup_du.max(g.singular_values().max());
        for &t in &opts.t_values {
            let j = Mat3::identity() + g * t;
            let det = j.determinant();
            det_range = [det_range[0].min(det), det_range[1].max(det)];
            jacobian_norm = jacobian_norm.max(j.norm());
            if let Some(inv) = j.try_inverse() {
                inverse_norm = inverse_norm.max(inv.singular_values().max());
            } else {
                inverse_norm = f64::INFINITY;
            }
            let lhs = (det - 1.0 - t * g.trace()).abs();
            let rhs = 6.0 * t * t * gn * gn + 6.0 * t.powi(3) * gn.powi(3);
            expansion_excess = expansion_excess.max(lhs - rhs);
        }
    }

    let mut injectivity_ratio = f64::INFINITY;
    for k in 0..opts.pairs {
        let x = pts[rng.random_range(0..pts.len())];
        let y = if k % 2 == 0 {
            pts[rng.random_range(0..pts.len())]
        } else {
            let dir = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            x + dir * (field.r0 / 8.0) * rng.random::<f64>()
        };
        let d = (x - y).norm();
        if d > 1e-9 * field.r0 {
            let dd = (field.phi(1.0, &x) - field.phi(1.0, &y)).norm();
            injectivity_ratio = injectivity_ratio.min(dd / d);
        }
    }

    let c_tilde = if field.d_h > 0.0 {
        (sup_u + field.r0 * sup_du) / field.d_h
    } else {
        0.0
    };
    HomotopyReport {
        d_h: field.d_h,
        vertex_residual,
        face_residual,
        face_tolerance: (opts.face_fraction * field.d_h).max(1e-12 * field.r0),
        injectivity_ratio,
        det_range,
        jacobian_norm,
        inverse_norm,
        expansion_excess,
        sup_u,
        sup_du,
        c_tilde,
        samples: pts.len() + boundary.len(),
    }
}

/// Cube family: the top face of a cube pushed outwards by `amount`.
pub fn pushed_cube(center: Vec3, side: f64, amount: f64) -> Polyhedron {
    let h = side / 2.0;
    Polyhedron::cuboid(
        center - Vec3::repeat(h),
        center + Vec3::new(h, h, h + amount),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> AdmissibilityParams {
        AdmissibilityParams::default()
    }

    fn quick() -> VerifyOptions {
        VerifyOptions {
            samples: 1500,
            pairs: 400,
            ..Default::default()
        }
    }

    #[test]
    fn identity_pair_is_zero() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let f = build_field(&c, &c, &params(), &HomotopyOptions::default()).unwrap();
        for x in [
            Vec3::zeros(),
            Vec3::new(0.5, 0.1, 0.2),
            Vec3::new(0.55, 0.5, 0.5),
        ] {
            assert_eq!(f.displacement(&x), Vec3::zeros());
        }
        assert!(f
            .face_maps
            .iter()
            .all(|m| m.case == FaceCase::Coplanar && m.m_norm < 1e-14));
        let r = verify_homotopy(&c, &c, &f, &quick());
        assert!(r.passed(0.5), "{:?}", r.failures(0.5));
    }

    #[test]
    fn translation_is_constant_on_boundary() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let w = Vec3::new(0.01, 0.0, 0.0);
        let d = c.translated(&w);
        let f = build_field(&c, &d, &params(), &HomotopyOptions::default()).unwrap();
        for piece in f.pieces() {
            for u in piece.displacements() {
                assert_relative_eq!(u, w, epsilon = 1e-15);
            }
        }
        for p in f.pieces().take(8) {
            let x = p.source_points().iter().sum::<Vec3>() / 3.0;
            assert_relative_eq!(f.displacement(&x), w, epsilon = 1e-14);
        }
        let r = verify_homotopy(&c, &d, &f, &quick());
        assert!(r.passed(0.5), "{:?}", r.failures(0.5));
        assert!(r.face_residual < 1e-13);
        assert_relative_eq!(r.sup_u, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn cutoff_support() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let d = pushed_cube(Vec3::zeros(), 1.0, 0.005);
        let f = build_field(&c, &d, &params(), &HomotopyOptions::default()).unwrap();
        for x in [
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 0.37),
            Vec3::new(0.0, 0.0, 0.63),
            Vec3::new(2.0, 0.0, 0.0),
        ] {
            assert_eq!(f.phi(0.7, &x), x);
        }
        assert_eq!(f.jacobian(0.0, &Vec3::new(0.1, 0.2, 0.5)), Mat3::identity());
    }

    #[test]
    fn pushed_face_maps_onto_target() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let d = pushed_cube(Vec3::zeros(), 1.0, 0.01);
        let f = build_field(&c, &d, &params(), &HomotopyOptions::default()).unwrap();
        assert_relative_eq!(f.d_h, 0.01, epsilon = 1e-3);
        let r = verify_homotopy(&c, &d, &f, &quick());
        assert!(r.passed(0.5), "{:?}", r.failures(0.5));
        assert!(r.face_residual < 1e-12);
    }

    #[test]
    fn octahedron_vertex_perturbation() {
        let o = Polyhedron::octahedron(Vec3::zeros(), 1.0);
        let dv = Vec3::new(0.003, -0.002, 0.00346).normalize() * 0.005;
        let top = (0..6)
            .max_by(|&a, &b| o.vertices()[a].z.total_cmp(&o.vertices()[b].z))
            .unwrap();
        let q = o.vertex_moved(top, &dv).unwrap();
        let f = build_field(&o, &q, &params(), &HomotopyOptions::default()).unwrap();
        assert_relative_eq!(f.displacement(&o.vertices()[top]), dv, epsilon = 1e-14);
        assert!(f
            .face_maps
            .iter()
            .any(|m| matches!(m.case, FaceCase::Rotate { .. })));
        let r = verify_homotopy(&o, &q, &f, &quick());
        assert!(r.passed(0.5), "{:?}", r.failures(0.5));
        assert!(r.face_residual <= r.d_h / 10.0);
        assert!(r.c_tilde.is_finite() && r.c_tilde > 0.0);
    }

    #[test]
    fn halving_the_push_halves_flap_values() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let f1 = build_field(
            &c,
            &pushed_cube(Vec3::zeros(), 1.0, 0.01),
            &params(),
            &HomotopyOptions::default(),
        )
        .unwrap();
        let f2 = build_field(
            &c,
            &pushed_cube(Vec3::zeros(), 1.0, 0.005),
            &params(),
            &HomotopyOptions::default(),
        )
        .unwrap();
        for (a, b) in f1.pieces().zip(f2.pieces()) {
            for (u, w) in a.displacements().iter().zip(b.displacements().iter()) {
                assert_relative_eq!(*u, w * 2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn large_deformation_rejected() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let d = pushed_cube(Vec3::zeros(), 1.0, 0.2);
        assert!(build_field(&c, &d, &params(), &HomotopyOptions::default()).is_err());
    }

    #[test]
    fn json_export() {
        let c = Polyhedron::cube(Vec3::zeros(), 1.0);
        let f = build_field(
            &c,
            &pushed_cube(Vec3::zeros(), 1.0, 0.005),
            &params(),
            &HomotopyOptions::default(),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["face_maps"].as_array().unwrap().len(), 6);
        assert!(v["pieces"].as_array().unwrap().len() >= 24);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn translations_interpolate_vertices(x in -0.008f64..0.008, y in -0.008f64..0.008, z in -0.008f64..0.008) {
            let c = Polyhedron::cube(Vec3::zeros(), 1.0);
            let w = Vec3::new(x, y, z);
            let d = c.translated(&w);
            let f = build_field(&c, &d, &params(), &HomotopyOptions::default()).unwrap();
            for (v0, v1) in c.vertices().iter().zip(d.vertices()) {
                proptest::prop_assert!((f.phi(1.0, v0) - v1).norm() <= 1e-12);
            }
        }

        #[test]
        fn pushed_face_stays_in_regime(a in 0.0005f64..0.01) {
            let c = Polyhedron::cube(Vec3::zeros(), 1.0);
            let d = pushed_cube(Vec3::zeros(), 1.0, a);
            let f = build_field(&c, &d, &params(), &HomotopyOptions::default()).unwrap();
            let r = verify_homotopy(&c, &d, &f, &VerifyOptions { samples: 300, pairs: 100, ..Default::default() });
            proptest::prop_assert!(r.vertex_residual <= 1e-12 * 0.5);
            proptest::prop_assert!(r.det_range[0] >= 0.5 && r.det_range[1] <= 1.5);
            proptest::prop_assert!((r.d_h - a).abs() <= 1e-9);
        }
    }
}
