//! Boundary displacement on one face: rigid reduction of the source plane onto
//! the target plane, then affine pieces on the flaps and on a triangulation of
//! the rest of the face.

use super::HomotopyError;
use crate::geometry::{plane_frame, rotation_between, triangulate_polygon2, Mat3, Vec2, Vec3};
use crate::polyhedra::{FlapTriangle, Polyhedron, VertexPairing};
use nalgebra::{Matrix2, Matrix3};
use serde::Serialize;

const PLANE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FaceCase {
    Coplanar,
    Parallel {
        w: [f64; 3],
    },
    /// Rotation by `angle` about the line through `point` with direction `axis`.
    Rotate {
        axis: [f64; 3],
        point: [f64; 3],
        angle: f64,
    },
}

/// Rigid motion taking the source plane onto the target plane.
#[derive(Debug, Clone, Copy)]
struct Reduction {
    rot: Mat3,
    point: Vec3,
    shift: Vec3,
}

impl Reduction {
    #[cfg(test)]
    fn apply(&self, x: &Vec3) -> Vec3 {
        self.point + self.rot * (x - self.point) + self.shift
    }

    fn inverse(&self, y: &Vec3) -> Vec3 {
        self.point + self.rot.transpose() * (y - self.shift - self.point)
    }
}

fn classify(n0: &Vec3, c0: f64, n1: &Vec3, c1: f64, scale: f64) -> (FaceCase, Reduction) {
    let angle = n0.dot(n1).clamp(-1.0, 1.0).acos();
    if angle < PLANE_TOL {
        let w = n0 * (c1 - c0);
        let red = Reduction {
            rot: Mat3::identity(),
            point: Vec3::zeros(),
            shift: w,
        };
        if (c1 - c0).abs() <= 1e-12 * scale {
            (FaceCase::Coplanar, red)
        } else {
            (FaceCase::Parallel { w: w.into() }, red)
        }
    } else {
        let axis = n0.cross(n1).normalize();
        // the point of the intersection line closest to the origin
        let m = Matrix3::from_rows(&[n0.transpose(), n1.transpose(), axis.transpose()]);
        let point = m
            .lu()
            .solve(&Vec3::new(c0, c1, 0.0))
            .unwrap_or_else(Vec3::zeros);
        (
            FaceCase::Rotate {
                axis: axis.into(),
                point: point.into(),
                angle,
            },
            Reduction {
                rot: rotation_between(n0, n1),
                point,
                shift: Vec3::zeros(),
            },
        )
    }
}

/// Affine map d(x) = M x + v in plane coordinates with d(src[i]) = dst[i] − src[i].
pub fn flap_affine(src: [Vec2; 3], dst: [Vec2; 3]) -> Option<(Matrix2<f64>, Vec2)> {
    let a = Matrix3::from_rows(&src.map(|p| nalgebra::RowVector3::new(p.x, p.y, 1.0)));
    let lu = a.lu();
    let dx = lu.solve(&Vec3::from_fn(|i, _| dst[i].x - src[i].x))?;
    let dy = lu.solve(&Vec3::from_fn(|i, _| dst[i].y - src[i].y))?;
    Some((
        Matrix2::new(dx[0], dx[1], dy[0], dy[1]),
        Vec2::new(dx[2], dy[2]),
    ))
}

/// One triangle on which the boundary field is affine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffinePiece {
    pub source: [[f64; 3]; 3],
    pub target: [[f64; 3]; 3],
    /// Reduced in-plane map as row-major M and offset v.
    pub m: [[f64; 2]; 2],
    pub v: [f64; 2],
    /// Loop position of the base edge for flaps, `None` on the remainder.
    pub flap: Option<usize>,
}

impl AffinePiece {
    pub fn source_points(&self) -> [Vec3; 3] {
        self.source.map(Vec3::from)
    }

    pub fn displacements(&self) -> [Vec3; 3] {
        std::array::from_fn(|i| Vec3::from(self.target[i]) - Vec3::from(self.source[i]))
    }

    /// Gradient of the affine displacement along the piece, zero in the normal direction.
    pub fn gradient(&self) -> Mat3 {
        let [p, q, r] = self.source_points();
        let [dp, dq, dr] = self.displacements();
        let (e1, e2) = (q - p, r - p);
        let n = e1.cross(&e2).normalize();
        let frame = Mat3::from_columns(&[e1, e2, n]);
        let du = Mat3::from_columns(&[dq - dp, dr - dp, Vec3::zeros()]);
        du * frame.try_inverse().unwrap_or_else(Mat3::zeros)
    }

    pub fn m_norm(&self) -> f64 {
        let m = Matrix2::new(self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]);
        m.singular_values().max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceMap {
    pub source: usize,
    pub target: usize,
    pub case: FaceCase,
    pub pieces: Vec<AffinePiece>,
    /// Largest ‖M‖₂ over the pieces.
    pub m_norm: f64,
    /// Largest gradient norm of the 3D displacement over the pieces.
    pub lipschitz: f64,
}

impl FaceMap {
    pub fn flaps(&self) -> impl Iterator<Item = &AffinePiece> {
        self.pieces.iter().filter(|p| p.flap.is_some())
    }
}

/// Face map for face `f` of P₀ onto its paired face in P₁. The flap lists
/// come from `flap_triangles` on each polyhedron.
pub fn build_face_map(
    p0: &Polyhedron,
    p1: &Polyhedron,
    f: usize,
    pairing: &VertexPairing,
    flaps0: &[FlapTriangle],
    flaps1: &[FlapTriangle],
    max_sin: f64,
) -> Result<FaceMap, HomotopyError> {
    let g = pairing.faces[f];
    let (n0, c0) = p0.plane(f);
    let (n1, c1) = p1.plane(g);
    let scale = p0.diam();
    let (case, red) = classify(&n0, c0, &n1, c1, scale);
    if let FaceCase::Rotate { angle, .. } = case {
        if angle.sin() > max_sin {
            return Err(HomotopyError::Regime {
                face: f,
                sin: angle.sin(),
                limit: max_sin,
            });
        }
    }
    let l = &p0.faces()[f];
    let nl = l.len();
    let own: Vec<&FlapTriangle> = (0..nl)
        .map(|k| {
            flaps0
                .iter()
                .find(|t| t.face == f && t.edge == k)
                .ok_or(HomotopyError::MissingFlap { face: f, edge: k })
        })
        .collect::<Result<_, _>>()?;
    let images: Vec<&FlapTriangle> = own
        .iter()
        .map(|t| {
            let base = [pairing.map[t.base[0]], pairing.map[t.base[1]]];
            flaps1.iter().find(|s| s.face == g && s.base == base).ok_or(
                HomotopyError::MissingFlap {
                    face: f,
                    edge: t.edge,
                },
            )
        })
        .collect::<Result<_, _>>()?;

    let (u, v) = plane_frame(&n0);
    let origin = p0.vertices()[l[0]];
    let to2 = |x: &Vec3| Vec2::new((x - origin).dot(&u), (x - origin).dot(&v));
    let reduced = |y: &Vec3| to2(&red.inverse(y));

    let mut pieces = Vec::new();
    let mut push =
        |src: [Vec3; 3], dst: [Vec3; 3], flap: Option<usize>| -> Result<(), HomotopyError> {
            let (m, off) = flap_affine(src.map(|x| to2(&x)), dst.map(|y| reduced(&y)))
                .ok_or(HomotopyError::Degenerate { face: f })?;
            let piece = AffinePiece {
                source: src.map(Into::into),
                target: dst.map(Into::into),
                m: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
                v: off.into(),
                flap,
            };
            pieces.push(piece);
            Ok(())
        };
    for (t, s) in own.iter().zip(&images) {
        push(t.points(), s.points(), Some(t.edge))?;
    }
    // remainder polygon V₀ E₀ V₁ E₁ … with Eₖ the apex on edge k
    let mut ring_src = Vec::with_capacity(2 * nl);
    let mut ring_dst = Vec::with_capacity(2 * nl);
    for k in 0..nl {
        ring_src.push(p0.vertices()[l[k]]);
        ring_dst.push(p1.vertices()[pairing.map[l[k]]]);
        ring_src.push(Vec3::from(own[k].apex));
        ring_dst.push(Vec3::from(images[k].apex));
    }
    let ring2: Vec<Vec2> = ring_src.iter().map(|x| to2(x)).collect();
    let tris = triangulate_polygon2(&ring2).ok_or(HomotopyError::Degenerate { face: f })?;
    for [a, b, c] in tris {
        push(
            [ring_src[a], ring_src[b], ring_src[c]],
            [ring_dst[a], ring_dst[b], ring_dst[c]],
            None,
        )?;
    }
    let m_norm = pieces.iter().map(AffinePiece::m_norm).fold(0.0, f64::max);
    let lipschitz = pieces
        .iter()
        .map(|p| p.gradient().singular_values().max())
        .fold(0.0, f64::max);
    Ok(FaceMap {
        source: f,
        target: g,
        case,
        pieces,
        m_norm,
        lipschitz,
    })
}
