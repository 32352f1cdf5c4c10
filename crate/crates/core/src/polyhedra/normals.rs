//! Expansion of a unit vector on the three face normals at a vertex, the
//! line/plane angle identity behind its bound, and random trihedral corners.

use crate::geometry::{Mat3, Vec3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalError {
    #[error("normal triple is nearly dependent (|det| = {0})")]
    Conditioning(f64),
}

/// 2(sin²θ₀ + 1)/sin⁴θ₀.
pub fn decomposition_bound(theta0: f64) -> f64 {
    let s2 = theta0.sin().powi(2);
    2.0 * (s2 + 1.0) / (s2 * s2)
}

/// Coefficients α with n̄ = Σ αᵢ nᵢ.
pub fn decompose_normal(nbar: &Vec3, n: [Vec3; 3]) -> Result<[f64; 3], NormalError> {
    let m = Mat3::from_columns(&n);
    let det = m.determinant();
    if det.abs() < 1e-10 {
        return Err(NormalError::Conditioning(det.abs()));
    }
    let a = m
        .lu()
        .solve(nbar)
        .ok_or(NormalError::Conditioning(det.abs()))?;
    Ok([a.x, a.y, a.z])
}

/// sup over unit n̄ of maxᵢ |αᵢ|: the largest row norm of the inverse.
pub fn decomposition_sup(n: [Vec3; 3]) -> Result<f64, NormalError> {
    let m = Mat3::from_columns(&n);
    let inv = m
        .try_inverse()
        .ok_or(NormalError::Conditioning(m.determinant().abs()))?;
    Ok((0..3).map(|i| inv.row(i).norm()).fold(0.0, f64::max))
}

/// Angle between a line with direction `dir` and a plane with normal `normal`.
pub fn line_plane_angle(dir: &Vec3, normal: &Vec3) -> f64 {
    (dir.dot(normal).abs() / (dir.norm() * normal.norm()))
        .min(1.0)
        .asin()
}

/// Lines r = span(e₁) and s at angle θ₁ from r in the plane α = {x₃ = 0},
/// and a plane β through r at dihedral angle θ₂ from α. Returns (s, normal of β).
pub fn dihedral_configuration(theta1: f64, theta2: f64) -> (Vec3, Vec3) {
    let s = Vec3::new(theta1.cos(), theta1.sin(), 0.0);
    let beta_normal = Vec3::new(0.0, -theta2.sin(), theta2.cos());
    (s, beta_normal)
}

/// A convex trihedral corner: three edge directions and the outward normals
/// of the faces spanned by consecutive pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trihedral {
    pub edges: [Vec3; 3],
    pub normals: [Vec3; 3],
    /// Face angles between consecutive edges.
    pub face_angles: [f64; 3],
    /// Interior dihedral angles along each edge.
    pub dihedral: [f64; 3],
}

impl Trihedral {
    pub fn from_edges(d: [Vec3; 3]) -> Option<Self> {
        let d = d.map(|v| v.normalize());
        let orient = d[0].dot(&d[1].cross(&d[2]));
        if orient.abs() < 1e-9 {
            return None;
        }
        // order so that (d0, d1, d2) is right-handed
        let d = if orient > 0.0 { d } else { [d[0], d[2], d[1]] };
        // face k is spanned by d[k], d[k+1]; the solid lies on the side of the third edge
        let normals: [Vec3; 3] = std::array::from_fn(|k| {
            let n = d[(k + 1) % 3].cross(&d[k]).normalize();
            if n.dot(&d[(k + 2) % 3]) > 0.0 {
                -n
            } else {
                n
            }
        });
        let face_angles =
            std::array::from_fn(|k| d[k].dot(&d[(k + 1) % 3]).clamp(-1.0, 1.0).acos());
        // edge k is shared by faces k-1 and k
        let dihedral = std::array::from_fn(|k| {
            let (a, b) = (normals[(k + 2) % 3], normals[k]);
            std::f64::consts::PI - a.dot(&b).clamp(-1.0, 1.0).acos()
        });
        Some(Self {
            edges: d,
            normals,
            face_angles,
            dihedral,
        })
    }

    pub fn admissible(&self, theta0: f64) -> bool {
        let ok = |a: f64| a > theta0 && a < std::f64::consts::PI - theta0;
        self.face_angles.iter().all(|&a| ok(a)) && self.dihedral.iter().all(|&a| ok(a))
    }
}

/// Rejection sample of a convex corner with all face and dihedral angles in
/// (θ₀, π − θ₀).
pub fn random_trihedral<R: Rng>(rng: &mut R, theta0: f64) -> Trihedral {
    loop {
        let d: [Vec3; 3] = std::array::from_fn(|_| {
            Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            )
        });
        if d.iter().any(|v| v.norm() < 1e-6) {
            continue;
        }
        if let Some(t) = Trihedral::from_edges(d) {
            if t.admissible(theta0) {
                return t;
            }
        }
    }
}
