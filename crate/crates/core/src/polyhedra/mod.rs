//! Polyhedral solids with face, edge and vertex incidence, generators and
//! perturbation families, and a JSON exchange format.

mod admissible;
mod distance;
mod flaps;
mod normals;

pub use admissible::{
    lipschitz_slope, validate_class_p, AdmissibilityParams, AdmissibilityReport, ConstraintCheck,
    ParamsError,
};
pub use distance::{
    hausdorff_boundary, hausdorff_directed, hausdorff_solid, modified_distance, HausdorffEstimate,
    ModifiedDistance,
};
pub use flaps::{
    flap_height, flap_triangles, match_vertices, FlapError, FlapTriangle, MatchError, VertexPairing,
};
pub use normals::{
    decompose_normal, decomposition_bound, decomposition_sup, dihedral_configuration,
    line_plane_angle, random_trihedral, Trihedral,
};

use crate::geometry::{
    interior_angle2, plane_frame, polygon_area2, solid_angle, triangulate_polygon2, BoxDomain,
    Vec2, Vec3,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyhedronError {
    #[error("face {face} has {len} vertices, need at least 3")]
    ShortFace { face: usize, len: usize },
    #[error("face {face} references vertex {vertex}, only {count} vertices")]
    BadIndex {
        face: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge ({0}, {1}) is not shared by exactly two oppositely oriented faces")]
    NonManifold(usize, usize),
    #[error("Euler characteristic {0}, expected 2")]
    Euler(i64),
    #[error("face {face} deviates from its plane by {deviation}")]
    NonPlanar { face: usize, deviation: f64 },
    #[error("face {0} is not a simple polygon")]
    NonSimple(usize),
    #[error("faces are oriented inward (signed volume {0})")]
    Inward(f64),
    #[error("vertex {0} is not incident to any face")]
    Isolated(usize),
    #[error(
        "vertex {vertex} needs exactly {expected} incident faces for this operation, found {found}"
    )]
    Valence {
        vertex: usize,
        expected: usize,
        found: usize,
    },
    #[error("planes at vertex {0} do not meet in a point")]
    DegeneratePlanes(usize),
    #[error("json: {0}")]
    Json(String),
}

/// Edge with endpoints `v[0] < v[1]`; `faces[0]` traverses it as v0 → v1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub v: [usize; 2],
    pub faces: [usize; 2],
}

/// Exchange format: faces are counterclockwise loops seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedronJson {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<Vec<usize>>,
}

/// A closed polyhedral solid of genus zero with outward-oriented faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    vertices: Vec<Vec3>,
    faces: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    normals: Vec<Vec3>,
    offsets: Vec<f64>,
    triangles: Vec<[usize; 3]>,
    triangle_face: Vec<usize>,
}

impl Polyhedron {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Vec<usize>>) -> Result<Self, PolyhedronError> {
        let nv = vertices.len();
        for (f, loop_) in faces.iter().enumerate() {
            if loop_.len() < 3 {
                return Err(PolyhedronError::ShortFace {
                    face: f,
                    len: loop_.len(),
                });
            }
            if let Some(&v) = loop_.iter().find(|&&v| v >= nv) {
                return Err(PolyhedronError::BadIndex {
                    face: f,
                    vertex: v,
                    count: nv,
                });
            }
        }
        let mut used = vec![false; nv];
        faces.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(PolyhedronError::Isolated(v));
        }

        let mut half: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, l) in faces.iter().enumerate() {
            for k in 0..l.len() {
                let key = (l[k], l[(k + 1) % l.len()]);
                if half.insert(key, f).is_some() {
                    return Err(PolyhedronError::NonManifold(key.0, key.1));
                }
            }
        }
        let mut edges = Vec::new();
        for (&(a, b), &f) in &half {
            if a < b {
                let g = *half
                    .get(&(b, a))
                    .ok_or(PolyhedronError::NonManifold(a, b))?;
                edges.push(Edge {
                    v: [a, b],
                    faces: [f, g],
                });
            } else if !half.contains_key(&(b, a)) {
                return Err(PolyhedronError::NonManifold(b, a));
            }
        }
        edges.sort_by_key(|e| e.v);
        let chi = nv as i64 - edges.len() as i64 + faces.len() as i64;
        if chi != 2 {
            return Err(PolyhedronError::Euler(chi));
        }

        let diam = BoxDomain::bounding(&vertices).diam();
        let mut normals = Vec::with_capacity(faces.len());
        let mut offsets = Vec::with_capacity(faces.len());
        for (f, l) in faces.iter().enumerate() {
            // Newell normal
            let mut n = Vec3::zeros();
            for k in 0..l.len() {
                let (p, q) = (vertices[l[k]], vertices[l[(k + 1) % l.len()]]);
                n += Vec3::new(
                    (p.y - q.y) * (p.z + q.z),
                    (p.z - q.z) * (p.x + q.x),
                    (p.x - q.x) * (p.y + q.y),
                );
            }
            if n.norm() == 0.0 {
                return Err(PolyhedronError::NonSimple(f));
            }
            let n = n.normalize();
            let c = l.iter().map(|&v| n.dot(&vertices[v])).sum::<f64>() / l.len() as f64;
            let dev = l
                .iter()
                .map(|&v| (n.dot(&vertices[v]) - c).abs())
                .fold(0.0, f64::max);
            if dev > 1e-9 * diam {
                return Err(PolyhedronError::NonPlanar {
                    face: f,
                    deviation: dev,
                });
            }
            normals.push(n);
            offsets.push(c);
        }

        let mut triangles = Vec::new();
        let mut triangle_face = Vec::new();
        for (f, l) in faces.iter().enumerate() {
            let (u, v) = plane_frame(&normals[f]);
            let poly: Vec<Vec2> = l
                .iter()
                .map(|&i| Vec2::new(vertices[i].dot(&u), vertices[i].dot(&v)))
                .collect();
            if !is_simple2(&poly) {
                return Err(PolyhedronError::NonSimple(f));
            }
            let tris = triangulate_polygon2(&poly).ok_or(PolyhedronError::NonSimple(f))?;
            for t in tris {
                triangles.push([l[t[0]], l[t[1]], l[t[2]]]);
                triangle_face.push(f);
            }
        }

        let p = Self {
            vertices,
            faces,
            edges,
            normals,
            offsets,
            triangles,
            triangle_face,
        };
        let vol = p.volume();
        if vol <= 0.0 {
            return Err(PolyhedronError::Inward(vol));
        }
        Ok(p)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn normal(&self, face: usize) -> Vec3 {
        self.normals[face]
    }

    /// Face plane as (outward normal n, offset c) with n·x = c.
    pub fn plane(&self, face: usize) -> (Vec3, f64) {
        (self.normals[face], self.offsets[face])
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_face(&self, t: usize) -> usize {
        self.triangle_face[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                (b - a).cross(&(c - a)).norm() / 2.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> BoxDomain {
        BoxDomain::bounding(&self.vertices)
    }

    pub fn diam(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.vertices.iter().enumerate() {
            for q in &self.vertices[i + 1..] {
                d = d.max((p - q).norm());
            }
        }
        d
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::zeros();
        let mut vol = 0.0;
        for &[a, b, d] in &self.triangles {
            let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[d]);
            let v = p.dot(&q.cross(&r)) / 6.0;
            c += (p + q + r) * (v / 4.0);
            vol += v;
        }
        c / vol
    }

    /// Winding number of the boundary around `p`.
    pub fn winding(&self, p: &Vec3) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                solid_angle(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
            })
            .sum::<f64>()
            / (4.0 * PI)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        if self.is_convex() {
            return (0..self.faces.len()).all(|f| self.normals[f].dot(p) <= self.offsets[f]);
        }
        self.winding(p) > 0.5
    }

    pub fn is_convex(&self) -> bool {
        let tol = 1e-12 * self.bounding_box().diam();
        (0..self.faces.len()).all(|f| {
            self.vertices
                .iter()
                .all(|v| self.normals[f].dot(v) <= self.offsets[f] + tol)
        })
    }

    /// Unsigned distance to the boundary surface.
    pub fn boundary_distance(&self, p: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|t| crate::geometry::point_triangle_distance(p, &self.triangle_points(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance to the solid; zero inside.
    pub fn solid_distance(&self, p: &Vec3) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    /// Faces incident to vertex `v`, in no particular order.
    pub fn vertex_faces(&self, v: usize) -> Vec<usize> {
        (0..self.faces.len())
            .filter(|&f| self.faces[f].contains(&v))
            .collect()
    }

    /// Vertex of face `f` at loop position `k` with its loop neighbours.
    pub fn face_corner(&self, f: usize, k: usize) -> (Vec3, Vec3, Vec3) {
        let l = &self.faces[f];
        let n = l.len();
        (
            self.vertices[l[(k + n - 1) % n]],
            self.vertices[l[k]],
            self.vertices[l[(k + 1) % n]],
        )
    }

    /// Face loop projected into its plane frame (counterclockwise).
    pub fn face_polygon2(&self, f: usize) -> (Vec<Vec2>, Vec3, Vec3) {
        let (u, v) = plane_frame(&self.normals[f]);
        let poly = self.faces[f]
            .iter()
            .map(|&i| Vec2::new(self.vertices[i].dot(&u), self.vertices[i].dot(&v)))
            .collect();
        (poly, u, v)
    }

    /// Interior angles of the face polygon at each loop position.
    pub fn face_angles(&self, f: usize) -> Vec<f64> {
        let (poly, _, _) = self.face_polygon2(f);
        let n = poly.len();
        (0..n)
            .map(|k| interior_angle2(&poly[(k + n - 1) % n], &poly[k], &poly[(k + 1) % n]))
            .collect()
    }

    /// Interior dihedral angle at an edge, measured through the solid, in (0, 2π).
    pub fn dihedral_angle(&self, e: &Edge) -> f64 {
        let (a, b) = (self.vertices[e.v[0]], self.vertices[e.v[1]]);
        let dir = (b - a).normalize();
        let (n1, n2) = (self.normals[e.faces[0]], self.normals[e.faces[1]]);
        let w1 = n1.cross(&dir);
        let w2 = n2.cross(&(-dir));
        let x = w2.dot(&w1);
        let y = w2.dot(&(-n1));
        let t = y.atan2(x);
        if t <= 0.0 {
            t + 2.0 * PI
        } else {
            t
        }
    }

    pub fn edge_length(&self, e: &Edge) -> f64 {
        (self.vertices[e.v[0]] - self.vertices[e.v[1]]).norm()
    }

    pub fn to_json(&self) -> PolyhedronJson {
        PolyhedronJson {
            vertices: self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn from_json(j: &PolyhedronJson) -> Result<Self, PolyhedronError> {
        Self::new(
            j.vertices
                .iter()
                .map(|v| Vec3::new(v[0], v[1], v[2]))
                .collect(),
            j.faces.clone(),
        )
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("plain data serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, PolyhedronError> {
        let j: PolyhedronJson =
            serde_json::from_str(s).map_err(|e| PolyhedronError::Json(e.to_string()))?;
        Self::from_json(&j)
    }

    // generators

    /// Axis-aligned cuboid.
    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        let v = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        };
        let vertices = (0..8).map(v).collect();
        let faces = vec![
            vec![0, 2, 3, 1],
            vec![4, 5, 7, 6],
            vec![0, 1, 5, 4],
            vec![2, 6, 7, 3],
            vec![0, 4, 6, 2],
            vec![1, 3, 7, 5],
        ];
        Self::new(vertices, faces).expect("cuboid is well formed")
    }

    pub fn cube(center: Vec3, side: f64) -> Self {
        let h = Vec3::repeat(side / 2.0);
        Self::cuboid(center - h, center + h)
    }

    /// Tetrahedron on four points, reoriented as needed.
    pub fn tetrahedron(p: [Vec3; 4]) -> Result<Self, PolyhedronError> {
        let vol = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0])));
        let faces = if vol > 0.0 {
            vec![vec![0, 2, 1], vec![0, 1, 3], vec![0, 3, 2], vec![1, 2, 3]]
        } else {
            vec![vec![0, 1, 2], vec![0, 3, 1], vec![0, 2, 3], vec![1, 3, 2]]
        };
        Self::new(p.to_vec(), faces)
    }

    pub fn regular_tetrahedron(center: Vec3, edge: f64) -> Self {
        let s = edge / (2.0 * 2f64.sqrt());
        let p = [
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ]
        .map(|q| center + q * s);
        Self::tetrahedron(p).expect("regular tetrahedron")
    }

    /// Regular octahedron with vertices at distance `radius` along the axes.
    pub fn octahedron(center: Vec3, radius: f64) -> Self {
        let vertices = vec![
            center + Vec3::x() * radius,
            center - Vec3::x() * radius,
            center + Vec3::y() * radius,
            center - Vec3::y() * radius,
            center + Vec3::z() * radius,
            center - Vec3::z() * radius,
        ];
        let faces = vec![
            vec![0, 2, 4],
            vec![2, 1, 4],
            vec![1, 3, 4],
            vec![3, 0, 4],
            vec![2, 0, 5],
            vec![1, 2, 5],
            vec![3, 1, 5],
            vec![0, 3, 5],
        ];
        Self::new(vertices, faces).expect("octahedron is well formed")
    }

    /// Right prism over a counterclockwise polygon in the xy-plane.
    pub fn prism(base: &[Vec2], z0: f64, z1: f64) -> Result<Self, PolyhedronError> {
        let n = base.len();
        let mut vertices: Vec<Vec3> = base.iter().map(|p| Vec3::new(p.x, p.y, z0)).collect();
        vertices.extend(base.iter().map(|p| Vec3::new(p.x, p.y, z1)));
        let flip = polygon_area2(base) < 0.0;
        let order: Vec<usize> = if flip {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        let mut faces = vec![order.iter().rev().copied().collect::<Vec<_>>()];
        faces.push(order.iter().map(|&i| i + n).collect());
        for k in 0..n {
            let (i, j) = (order[k], order[(k + 1) % n]);
            faces.push(vec![i, j, j + n, i + n]);
        }
        Self::new(vertices, faces)
    }

    // perturbations

    pub fn translated(&self, t: &Vec3) -> Self {
        self.with_vertices(self.vertices.iter().map(|v| v + t).collect())
            .expect("translation preserves validity")
    }

    /// Scaled by `factor` about `center`.
    pub fn scaled(&self, factor: f64, center: &Vec3) -> Self {
        self.with_vertices(
            self.vertices
                .iter()
                .map(|v| center + (v - center) * factor)
                .collect(),
        )
        .expect("positive scaling preserves validity")
    }

    /// Same combinatorics, new coordinates.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self, PolyhedronError> {
        Self::new(vertices, self.faces.clone())
    }

    /// Moves one vertex. Every face at that vertex must be a triangle so that
    /// planarity is kept.
    pub fn vertex_moved(&self, v: usize, d: &Vec3) -> Result<Self, PolyhedronError> {
        for f in self.vertex_faces(v) {
            if self.faces[f].len() != 3 {
                return Err(PolyhedronError::Valence {
                    vertex: v,
                    expected: 3,
                    found: self.faces[f].len(),
                });
            }
        }
        let mut vs = self.vertices.clone();
        vs[v] += d;
        self.with_vertices(vs)
    }

    /// Replaces face planes and recomputes every vertex as the meeting point
    /// of its three face planes. Requires a simple polyhedron.
    pub fn with_planes(&self, planes: &[(Vec3, f64)]) -> Result<Self, PolyhedronError> {
        let mut vs = Vec::with_capacity(self.vertices.len());
        for v in 0..self.vertices.len() {
            let fs = self.vertex_faces(v);
            if fs.len() != 3 {
                return Err(PolyhedronError::Valence {
                    vertex: v,
                    expected: 3,
                    found: fs.len(),
                });
            }
            let p =
                crate::geometry::intersect_planes([planes[fs[0]], planes[fs[1]], planes[fs[2]]])
                    .ok_or(PolyhedronError::DegeneratePlanes(v))?;
            vs.push(p);
        }
        self.with_vertices(vs)
    }

    /// Pushes face `f` outward along its normal by `amount`.
    pub fn face_offset(&self, f: usize, amount: f64) -> Result<Self, PolyhedronError> {
        let mut planes: Vec<(Vec3, f64)> = (0..self.faces.len()).map(|g| self.plane(g)).collect();
        planes[f].1 += amount;
        self.with_planes(&planes)
    }

    /// Rotates the plane of face `f` by `angle` about an in-plane axis through
    /// the face centroid.
    pub fn face_tilted(&self, f: usize, axis: &Vec3, angle: f64) -> Result<Self, PolyhedronError> {
        let (n, _) = self.plane(f);
        let axis = (axis - n * n.dot(axis)).normalize();
        let c = self.faces[f]
            .iter()
            .map(|&i| self.vertices[i])
            .sum::<Vec3>()
            / self.faces[f].len() as f64;
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let n2 = r * n;
        let mut planes: Vec<(Vec3, f64)> = (0..self.faces.len()).map(|g| self.plane(g)).collect();
        planes[f] = (n2, n2.dot(&c));
        self.with_planes(&planes)
    }

    /// Same solid with vertex labels permuted: new vertex `k` is old `perm[k]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let vertices = perm.iter().map(|&p| self.vertices[p]).collect();
        let faces = self
            .faces
            .iter()
            .map(|l| l.iter().map(|&v| inv[v]).collect())
            .collect();
        Self::new(vertices, faces).expect("relabeling preserves validity")
    }
}

fn is_simple2(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if polygon_area2(poly) <= 0.0 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if crate::geometry::segments_cross2(&a, &b, &c, &d, 0.0) {
                return false;
            }
        }
    }
    true
}
