//! Membership tests for the admissible class of polyhedral inclusions.

use super::Polyhedron;
use crate::geometry::{triangle_lattice, BoxDomain, Vec3};
use nalgebra::SymmetricEigen;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("r0 = {0} must be positive")]
    R0(f64),
    #[error("M0 = {0} must be at least 1")]
    M0(f64),
    #[error("M1 = {0} must exceed 1")]
    M1(f64),
    #[error("theta0 = {0} outside (0, pi/2)")]
    Theta0(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct AdmissibilityParams {
    pub r0: f64,
    pub m0: f64,
    pub m1: f64,
    pub theta0: f64,
    /// Upper bound on vertex, edge and face counts.
    pub n0: usize,
}

impl AdmissibilityParams {
    pub fn new(r0: f64, m0: f64, m1: f64, theta0: f64) -> Result<Self, ParamsError> {
        if !(r0 > 0.0) {
            return Err(ParamsError::R0(r0));
        }
        if !(m0 >= 1.0) {
            return Err(ParamsError::M0(m0));
        }
        if !(m1 > 1.0) {
            return Err(ParamsError::M1(m1));
        }
        if !(theta0 > 0.0 && theta0 < PI / 2.0) {
            return Err(ParamsError::Theta0(theta0));
        }
        Ok(Self {
            r0,
            m0,
            m1,
            theta0,
            n0: 200,
        })
    }

    /// Signed distance of an angle to the complement of
    /// (θ₀, π−θ₀) ∪ (π+θ₀, 2π−θ₀): positive inside.
    pub fn angle_margin(&self, a: f64) -> f64 {
        let t = self.theta0;
        let m1 = (a - t).min(PI - t - a);
        let m2 = (a - PI - t).min(2.0 * PI - t - a);
        m1.max(m2)
    }
}

impl Default for AdmissibilityParams {
    fn default() -> Self {
        Self::new(0.5, 2.0, 20.0, PI / 6.0).expect("valid defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

impl ConstraintCheck {
    fn new(name: &'static str, margin: f64, detail: String) -> Self {
        Self {
            name,
            passed: margin >= 0.0,
            margin,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub checks: Vec<ConstraintCheck>,
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub within_n0: bool,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.within_n0 && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "V = {}, E = {}, F = {} ({})\n",
            self.vertices,
            self.edges,
            self.faces,
            if self.within_n0 {
                "within N0"
            } else {
                "exceeds N0"
            }
        );
        for c in &self.checks {
            s.push_str(&format!(
                "{:<6} {:<4} margin {:+.6e}  {}\n",
                c.name,
                if c.passed { "ok" } else { "FAIL" },
                c.margin,
                c.detail
            ));
        }
        s
    }
}

/// Checks the domain bound, strict inclusion, angle and edge bounds, and a
/// sampled test of the Lipschitz-graph condition.
pub fn validate_class_p(
    p: &Polyhedron,
    omega: &BoxDomain,
    params: &AdmissibilityParams,
) -> AdmissibilityReport {
    let r0 = params.r0;
    let mut checks = Vec::new();

    let diam = omega.diam();
    checks.push(ConstraintCheck::new(
        "H1",
        params.m1 * r0 - diam,
        format!(
            "diam(Omega) = {diam:.6} against M1 r0 = {:.6}",
            params.m1 * r0
        ),
    ));

    let depth = p
        .vertices()
        .iter()
        .map(|v| omega.depth(v))
        .fold(f64::INFINITY, f64::min);
    checks.push(ConstraintCheck::new(
        "H2-1",
        depth - r0,
        format!("dist(D, boundary) = {depth:.6}"),
    ));

    let (mut worst, mut at) = (f64::INFINITY, 0.0);
    for e in p.edges() {
        let a = p.dihedral_angle(e);
        let m = params.angle_margin(a);
        if m < worst {
            worst = m;
            at = a;
        }
    }
    checks.push(ConstraintCheck::new(
        "H2-2",
        worst,
        format!("worst dihedral angle {at:.6}"),
    ));

    let shortest = p
        .edges()
        .iter()
        .map(|e| p.edge_length(e))
        .fold(f64::INFINITY, f64::min);
    checks.push(ConstraintCheck::new(
        "H2-3",
        shortest - r0,
        format!("shortest edge {shortest:.6}"),
    ));

    let (mut worst, mut at) = (f64::INFINITY, 0.0);
    for f in 0..p.faces().len() {
        for a in p.face_angles(f) {
            let m = params.angle_margin(a);
            if m < worst {
                worst = m;
                at = a;
            }
        }
    }
    checks.push(ConstraintCheck::new(
        "H2-4",
        worst,
        format!("worst face angle {at:.6}"),
    ));

    let slope = lipschitz_slope(p, r0);
    checks.push(ConstraintCheck::new(
        "H2-5",
        params.m0 - slope,
        format!("largest local graph slope {slope:.6}"),
    ));

    let (nv, ne, nf) = (p.vertices().len(), p.edges().len(), p.faces().len());
    AdmissibilityReport {
        checks,
        vertices: nv,
        edges: ne,
        faces: nf,
        within_n0: nv.max(ne).max(nf) <= params.n0,
    }
}

/// Boundary samples within `radius` of `center`.
fn local_samples(p: &Polyhedron, center: &Vec3, radius: f64, pitch: f64) -> Vec<Vec3> {
    let mut out = Vec::new();
    for t in 0..p.triangles().len() {
        let tri = p.triangle_points(t);
        if crate::geometry::point_triangle_distance(center, &tri) > radius {
            continue;
        }
        let longest = (tri[0] - tri[1])
            .norm()
            .max((tri[1] - tri[2]).norm())
            .max((tri[2] - tri[0]).norm());
        let n = ((longest / pitch).ceil() as usize).max(1);
        out.extend(
            triangle_lattice(&tri, n)
                .into_iter()
                .filter(|q| (q - center).norm() <= radius),
        );
    }
    out
}

/// Largest pairwise slope of the samples relative to the plane normal to `dir`.
fn graph_slope(samples: &[Vec3], dir: &Vec3) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            let d = b - a;
            let h = d.dot(dir).abs();
            let w = (d - dir * d.dot(dir)).norm();
            if h <= 1e-12 * d.norm() {
                continue;
            }
            if w <= 1e-12 * d.norm() {
                return f64::INFINITY;
            }
            worst = worst.max(h / w);
        }
    }
    worst
}

/// Surrogate for the Lipschitz-graph condition: at every vertex and edge
/// midpoint, the boundary within r₀ is tested as a graph over the best of
/// two candidate planes (mean of the incident face normals and PCA normal).
pub fn lipschitz_slope(p: &Polyhedron, r0: f64) -> f64 {
    let mut anchors: Vec<(Vec3, Vec<usize>)> = (0..p.vertices().len())
        .map(|v| (p.vertices()[v], p.vertex_faces(v)))
        .collect();
    anchors.extend(p.edges().iter().map(|e| {
        (
            0.5 * (p.vertices()[e.v[0]] + p.vertices()[e.v[1]]),
            e.faces.to_vec(),
        )
    }));
    let pitch = r0 / 6.0;
    let mut worst: f64 = 0.0;
    for (a, faces) in &anchors {
        let samples = local_samples(p, a, r0, pitch);
        let mean: Vec3 = faces.iter().map(|&f| p.normal(f)).sum();
        let mut candidates = Vec::new();
        if mean.norm() > 1e-12 {
            candidates.push(mean.normalize());
        }
        let c = samples.iter().sum::<Vec3>() / samples.len().max(1) as f64;
        let cov = samples
            .iter()
            .map(|q| (q - c) * (q - c).transpose())
            .sum::<crate::geometry::Mat3>();
        let eig = SymmetricEigen::new(cov);
        let k = eig.eigenvalues.imin();
        candidates.push(eig.eigenvectors.column(k).into_owned());
        let best = candidates
            .iter()
            .map(|d| graph_slope(&samples, d))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}
