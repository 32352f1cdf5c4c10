//! Vertex matching between nearby polyhedra and the isosceles flap
//! triangles attached to every face edge.

use super::{AdmissibilityParams, Polyhedron};
use crate::geometry::{
    convex_separation2, point_in_polygon2, segments_cross2, triangle_distance2, Vec2, Vec3,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlapError {
    #[error("flap on face {face}, edge {edge} leaves the face")]
    NotContained { face: usize, edge: usize },
    #[error("flaps {a} and {b} on face {face} overlap by {depth}")]
    Overlap {
        face: usize,
        a: usize,
        b: usize,
        depth: f64,
    },
    #[error("flaps {a} and {b} on face {face} are {dist} apart, below {bound}")]
    TooClose {
        face: usize,
        a: usize,
        b: usize,
        dist: f64,
        bound: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("vertex counts differ: {0} against {1}")]
    Count(usize, usize),
    #[error("d_H = {d_h} exceeds delta0 r0 = {limit}")]
    Regime { d_h: f64, limit: f64 },
    #[error("vertex {vertex} has {candidates} candidates within d_H")]
    Ambiguous { vertex: usize, candidates: usize },
    #[error("vertex {vertex} moves by {dist}, above C4 d_H = {bound}")]
    Displacement {
        vertex: usize,
        dist: f64,
        bound: f64,
    },
    #[error("nearest-neighbour map is not a bijection")]
    NotBijective,
    #[error("face {0} has no counterpart with the same vertices")]
    Face(usize),
}

/// h₀ = (r₀/2) tan γ with γ = min{θ₀/3, π/2 − arctan M₀}.
pub fn flap_height(params: &AdmissibilityParams) -> f64 {
    let gamma = (params.theta0 / 3.0).min(std::f64::consts::FRAC_PI_2 - params.m0.atan());
    params.r0 / 2.0 * gamma.tan()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlapTriangle {
    pub face: usize,
    /// Loop position of the base edge: vertices `loop[k]`, `loop[k+1]`.
    pub edge: usize,
    pub base: [usize; 2],
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub apex: [f64; 3],
    pub h0: f64,
}

impl FlapTriangle {
    pub fn points(&self) -> [Vec3; 3] {
        [
            Vec3::from(self.a),
            Vec3::from(self.b),
            Vec3::from(self.apex),
        ]
    }
}

/// One flap per (face, edge). Apex E = M − h₀ n with n the in-plane outward
/// edge normal. Containment, disjointness and separation are checked.
pub fn flap_triangles(
    p: &Polyhedron,
    params: &AdmissibilityParams,
) -> Result<Vec<FlapTriangle>, FlapError> {
    let h0 = flap_height(params);
    let sep = params.r0 * params.m0.atan().cos();
    let mut out = Vec::new();
    for f in 0..p.faces().len() {
        let l = &p.faces()[f];
        let n = p.normal(f);
        let (poly, u, v) = p.face_polygon2(f);
        let to2 = |x: &Vec3| Vec2::new(x.dot(&u), x.dot(&v));
        let first = out.len();
        for k in 0..l.len() {
            let (ia, ib) = (l[k], l[(k + 1) % l.len()]);
            let (a, b) = (p.vertices()[ia], p.vertices()[ib]);
            let m = (a + b) / 2.0;
            // counterclockwise loop: the face lies to the left, n × t points inward
            let inward = n.cross(&(b - a)).normalize();
            let e = m + inward * h0;
            let (a2, b2, e2) = (to2(&a), to2(&b), to2(&e));
            let scale = (b - a).norm();
            let contained = point_in_polygon2(&e2, &poly, 1e-12 * scale)
                && (0..poly.len()).all(|j| {
                    let (c, d) = (poly[j], poly[(j + 1) % poly.len()]);
                    !segments_cross2(&a2, &e2, &c, &d, 1e-12)
                        && !segments_cross2(&e2, &b2, &c, &d, 1e-12)
                });
            if !contained {
                return Err(FlapError::NotContained { face: f, edge: k });
            }
            out.push(FlapTriangle {
                face: f,
                edge: k,
                base: [ia, ib],
                a: a.into(),
                b: b.into(),
                apex: e.into(),
                h0,
            });
        }
        let flaps = &out[first..];
        let nk = flaps.len();
        for i in 0..nk {
            for j in i + 1..nk {
                let ti = flaps[i].points().map(|x| to2(&x));
                let tj = flaps[j].points().map(|x| to2(&x));
                let adjacent = j == i + 1 || (i == 0 && j == nk - 1);
                let s = convex_separation2(&ti, &tj);
                let scale = params.r0;
                if s < -1e-12 * scale {
                    return Err(FlapError::Overlap {
                        face: f,
                        a: i,
                        b: j,
                        depth: -s,
                    });
                }
                if !adjacent {
                    let d = triangle_distance2(&ti, &tj);
                    if d < sep * (1.0 - 1e-12) {
                        return Err(FlapError::TooClose {
                            face: f,
                            a: i,
                            b: j,
                            dist: d,
                            bound: sep,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Vertex correspondence between two nearby polyhedra.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexPairing {
    /// `map[i]` is the index in P₁ paired with vertex `i` of P₀.
    pub map: Vec<usize>,
    pub displacements: Vec<[f64; 3]>,
    pub max_displacement: f64,
    /// `faces[f]` is the face of P₁ with the images of the vertices of face `f`.
    pub faces: Vec<usize>,
}

impl VertexPairing {
    pub fn displacement(&self, i: usize) -> Vec3 {
        Vec3::from(self.displacements[i])
    }
}

/// Nearest-neighbour pairing; requires d_H ≤ δ₀ r₀ and every displacement
/// ≤ C₄ d_H.
pub fn match_vertices(
    p0: &Polyhedron,
    p1: &Polyhedron,
    d_h: f64,
    r0: f64,
    delta0: f64,
    c4: f64,
) -> Result<VertexPairing, MatchError> {
    let (n0, n1) = (p0.vertices().len(), p1.vertices().len());
    if n0 != n1 {
        return Err(MatchError::Count(n0, n1));
    }
    if d_h > delta0 * r0 {
        return Err(MatchError::Regime {
            d_h,
            limit: delta0 * r0,
        });
    }
    let slack = 1e-12 * p0.diam().max(p1.diam());
    let mut map = Vec::with_capacity(n0);
    let mut displacements = Vec::with_capacity(n0);
    let mut max_displacement: f64 = 0.0;
    for (i, v) in p0.vertices().iter().enumerate() {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut close = 0;
        for (j, w) in p1.vertices().iter().enumerate() {
            let d = (v - w).norm();
            if d <= d_h + slack {
                close += 1;
            }
            if d < best.0 {
                best = (d, j);
            }
        }
        if close > 1 {
            return Err(MatchError::Ambiguous {
                vertex: i,
                candidates: close,
            });
        }
        if best.0 > c4 * d_h + slack {
            return Err(MatchError::Displacement {
                vertex: i,
                dist: best.0,
                bound: c4 * d_h,
            });
        }
        let d = p1.vertices()[best.1] - v;
        map.push(best.1);
        displacements.push([d.x, d.y, d.z]);
        max_displacement = max_displacement.max(best.0);
    }
    let mut seen = vec![false; n1];
    for &j in &map {
        if std::mem::replace(&mut seen[j], true) {
            return Err(MatchError::NotBijective);
        }
    }
    let mut faces = Vec::with_capacity(p0.faces().len());
    for (f, l) in p0.faces().iter().enumerate() {
        let mut img: Vec<usize> = l.iter().map(|&v| map[v]).collect();
        img.sort_unstable();
        let g = p1
            .faces()
            .iter()
            .position(|m| {
                let mut m = m.clone();
                m.sort_unstable();
                m == img
            })
            .ok_or(MatchError::Face(f))?;
        faces.push(g);
    }
    Ok(VertexPairing {
        map,
        displacements,
        max_displacement,
        faces,
    })
}
