//! Hausdorff distances between polyhedral boundaries and solids, and the
//! modified distance restricted to boundary parts reachable from ∂Ω.

use super::Polyhedron;
use crate::geometry::{point_triangle_distance, triangle_lattice, BoxDomain, Vec3};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

/// Certified bracket `lower ≤ d ≤ upper` with `lower` attained at `witness`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HausdorffEstimate {
    pub lower: f64,
    pub upper: f64,
    pub witness: [f64; 3],
}

impl HausdorffEstimate {
    pub fn value(&self) -> f64 {
        self.lower
    }

    pub fn resolution(&self) -> f64 {
        self.upper - self.lower
    }

    fn max(self, other: Self) -> Self {
        let w = if self.lower >= other.lower {
            self.witness
        } else {
            other.witness
        };
        Self {
            lower: self.lower.max(other.lower),
            upper: self.upper.max(other.upper),
            witness: w,
        }
    }
}

struct Cell {
    ub: f64,
    tri: [Vec3; 3],
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.ub == o.ub
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.ub.total_cmp(&o.ub)
    }
}

/// Distance from a point to `b`: to its boundary, or to the solid.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Boundary,
    Solid,
}

fn evaluate(b: &Polyhedron, p: &Vec3, target: Target) -> f64 {
    match target {
        Target::Boundary => b.boundary_distance(p),
        Target::Solid => b.solid_distance(p),
    }
}

/// Upper bound of the distance to `b` over a triangle: distance to each
/// target triangle is convex, so its maximum sits at a vertex.
fn triangle_upper(b: &Polyhedron, tri: &[Vec3; 3], target: Target) -> f64 {
    if target == Target::Solid {
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let rho = tri.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
        if b.contains(&c) && b.boundary_distance(&c) > rho {
            return 0.0;
        }
    }
    (0..b.triangles().len())
        .map(|j| {
            let t = b.triangle_points(j);
            tri.iter()
                .map(|v| point_triangle_distance(v, &t))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

fn directed(a: &Polyhedron, b: &Polyhedron, tol: f64, target: Target) -> HausdorffEstimate {
    let mut heap = BinaryHeap::new();
    let mut lower = 0.0;
    let mut witness = a.vertices()[0];
    let probe = |p: Vec3, lower: &mut f64, witness: &mut Vec3| {
        let d = evaluate(b, &p, target);
        if d > *lower {
            *lower = d;
            *witness = p;
        }
    };
    for v in a.vertices() {
        probe(*v, &mut lower, &mut witness);
    }
    for t in 0..a.triangles().len() {
        let tri = a.triangle_points(t);
        probe((tri[0] + tri[1] + tri[2]) / 3.0, &mut lower, &mut witness);
        heap.push(Cell {
            ub: triangle_upper(b, &tri, target),
            tri,
        });
    }
    let mut upper = lower;
    while let Some(cell) = heap.pop() {
        if cell.ub <= lower + tol {
            upper = cell.ub.max(lower);
            break;
        }
        let [p, q, r] = cell.tri;
        let (pq, qr, rp) = ((p + q) / 2.0, (q + r) / 2.0, (r + p) / 2.0);
        for child in [[p, pq, rp], [pq, q, qr], [rp, qr, r], [pq, qr, rp]] {
            probe(
                (child[0] + child[1] + child[2]) / 3.0,
                &mut lower,
                &mut witness,
            );
            for v in &child {
                probe(*v, &mut lower, &mut witness);
            }
            let ub = triangle_upper(b, &child, target);
            if ub > lower + tol {
                heap.push(Cell { ub, tri: child });
            }
        }
        upper = upper.max(lower);
    }
    if heap.is_empty() {
        upper = upper.max(lower);
    }
    HausdorffEstimate {
        lower,
        upper: upper.max(lower),
        witness: [witness.x, witness.y, witness.z],
    }
}

/// sup over ∂A of the distance to ∂B, to within `tol`.
pub fn hausdorff_directed(a: &Polyhedron, b: &Polyhedron, tol: f64) -> HausdorffEstimate {
    directed(a, b, tol, Target::Boundary)
}

/// d_H(∂P₀, ∂P₁).
pub fn hausdorff_boundary(p0: &Polyhedron, p1: &Polyhedron, tol: f64) -> HausdorffEstimate {
    hausdorff_directed(p0, p1, tol).max(hausdorff_directed(p1, p0, tol))
}

/// d_H(P₀, P₁) for the solids. The directed suprema are sought on the
/// boundaries, where they sit for solids without cavities.
pub fn hausdorff_solid(p0: &Polyhedron, p1: &Polyhedron, tol: f64) -> HausdorffEstimate {
    directed(p0, p1, tol, Target::Solid).max(directed(p1, p0, tol, Target::Solid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModifiedDistance {
    pub value: f64,
    /// Fraction of boundary samples of P₀, P₁ reachable from ∂Ω.
    pub reachable: [f64; 2],
    pub voxel: f64,
}

/// d_μ with the outer component found by a voxel flood fill at pitch `voxel`.
pub fn modified_distance(
    p0: &Polyhedron,
    p1: &Polyhedron,
    omega: &BoxDomain,
    voxel: f64,
) -> ModifiedDistance {
    let bb = p0
        .bounding_box()
        .union(&p1.bounding_box())
        .expanded(3.0 * voxel);
    let lo = bb.lo.sup(&omega.lo);
    let hi = bb.hi.inf(&omega.hi);
    let dims: [usize; 3] =
        std::array::from_fn(|k| (((hi[k] - lo[k]) / voxel).ceil() as usize).max(1));
    let idx = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;
    let center = |i: usize, j: usize, k: usize| {
        lo + Vec3::new(
            (i as f64 + 0.5) * voxel,
            (j as f64 + 0.5) * voxel,
            (k as f64 + 0.5) * voxel,
        )
    };
    let total = dims[0] * dims[1] * dims[2];
    let mut blocked = vec![false; total];
    let (b0, b1) = (p0.bounding_box(), p1.bounding_box());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let c = center(i, j, k);
                blocked[idx(i, j, k)] =
                    (b0.contains(&c) && p0.contains(&c)) || (b1.contains(&c) && p1.contains(&c));
            }
        }
    }
    // cells outside the box are part of the outer component
    let mut outer = vec![false; total];
    let mut queue = VecDeque::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let border = i == 0
                    || j == 0
                    || k == 0
                    || i + 1 == dims[0]
                    || j + 1 == dims[1]
                    || k + 1 == dims[2];
                let id = idx(i, j, k);
                if border && !blocked[id] {
                    outer[id] = true;
                    queue.push_back((i, j, k));
                }
            }
        }
    }
    while let Some((i, j, k)) = queue.pop_front() {
        let mut visit = |a: usize, b: usize, c: usize| {
            let id = idx(a, b, c);
            if !blocked[id] && !outer[id] {
                outer[id] = true;
                queue.push_back((a, b, c));
            }
        };
        if i > 0 {
            visit(i - 1, j, k);
        }
        if i + 1 < dims[0] {
            visit(i + 1, j, k);
        }
        if j > 0 {
            visit(i, j - 1, k);
        }
        if j + 1 < dims[1] {
            visit(i, j + 1, k);
        }
        if k > 0 {
            visit(i, j, k - 1);
        }
        if k + 1 < dims[2] {
            visit(i, j, k + 1);
        }
    }
    let reachable_cell = |p: &Vec3| -> bool {
        let r = (p - lo) / voxel;
        if (0..3).any(|k| r[k] < 0.0 || r[k] >= dims[k] as f64) {
            return true;
        }
        outer[idx(r.x as usize, r.y as usize, r.z as usize)]
    };

    let side = |a: &Polyhedron, b: &Polyhedron| -> (f64, f64) {
        let mut best: f64 = 0.0;
        let (mut hit, mut count) = (0usize, 0usize);
        for t in 0..a.triangles().len() {
            let tri = a.triangle_points(t);
            let n = a.normal(a.triangle_face(t));
            let longest = (tri[0] - tri[1])
                .norm()
                .max((tri[1] - tri[2]).norm())
                .max((tri[2] - tri[0]).norm());
            let m = ((2.0 * longest / voxel).ceil() as usize).max(1);
            for p in triangle_lattice(&tri, m) {
                count += 1;
                let probe = p + n * (1.5 * voxel);
                let inside_other = b.contains(&p) && b.boundary_distance(&p) > 1e-12;
                if inside_other || !reachable_cell(&probe) {
                    continue;
                }
                hit += 1;
                best = best.max(b.solid_distance(&p));
            }
        }
        (best, hit as f64 / count.max(1) as f64)
    };
    let (d0, f0) = side(p0, p1);
    let (d1, f1) = side(p1, p0);
    ModifiedDistance {
        value: d0.max(d1),
        reachable: [f0, f1],
        voxel,
    }
}
