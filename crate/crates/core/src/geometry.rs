//! Small computational-geometry kernel shared by the polyhedral, meshing and
//! homotopy code.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl BoxDomain {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    pub fn centered(center: Vec3, side: f64) -> Self {
        let h = Vec3::repeat(side / 2.0);
        Self::new(center - h, center + h)
    }

    pub fn diam(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.lo + self.hi)
    }

    pub fn extent(&self) -> Vec3 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    /// Distance from an interior point to the box boundary; negative outside.
    pub fn depth(&self, p: &Vec3) -> f64 {
        (0..3)
            .map(|k| (p[k] - self.lo[k]).min(self.hi[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn expanded(&self, d: f64) -> Self {
        Self::new(self.lo - Vec3::repeat(d), self.hi + Vec3::repeat(d))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.lo.inf(&other.lo), self.hi.sup(&other.hi))
    }

    pub fn bounding(points: &[Vec3]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Self::new(lo, hi)
    }
}

/// Closest point to `p` on the triangle (a, b, c).
pub fn closest_point_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn point_triangle_distance(p: &Vec3, t: &[Vec3; 3]) -> f64 {
    (p - closest_point_triangle(p, &t[0], &t[1], &t[2])).norm()
}

/// Signed solid angle subtended by the triangle at `p`.
pub fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (ra, rb, rc) = (a - p, b - p, c - p);
    let (la, lb, lc) = (ra.norm(), rb.norm(), rc.norm());
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + ra.dot(&rc) * lb + rb.dot(&rc) * la;
    2.0 * num.atan2(den)
}

/// Closest pair distance between segments [p0,p1] and [q0,q1].
pub fn segment_distance(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-300;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Intersection point of three planes n·x = c.
pub fn intersect_planes(planes: [(Vec3, f64); 3]) -> Option<Vec3> {
    let m = Mat3::from_rows(&[
        planes[0].0.transpose(),
        planes[1].0.transpose(),
        planes[2].0.transpose(),
    ]);
    let rhs = Vec3::new(planes[0].1, planes[1].1, planes[2].1);
    if m.determinant().abs() < 1e-12 {
        return None;
    }
    m.lu().solve(&rhs)
}

/// Orthonormal (u, v) spanning the plane with normal n, with u × v = n.
pub fn plane_frame(n: &Vec3) -> (Vec3, Vec3) {
    let n = n.normalize();
    let seed = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = (seed - n * n.dot(&seed)).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Rotation taking unit vector `a` to unit vector `b`.
pub fn rotation_between(a: &Vec3, b: &Vec3) -> Mat3 {
    let a = a.normalize();
    let b = b.normalize();
    let v = a.cross(&b);
    let c = a.dot(&b);
    let s = v.norm();
    if s < 1e-15 {
        if c > 0.0 {
            return Mat3::identity();
        }
        let (u, _) = plane_frame(&a);
        return 2.0 * u * u.transpose() - Mat3::identity();
    }
    let k = v / s;
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * s + kx * kx * (1.0 - c)
}

pub fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Interior angle in (0, 2π) at `v` of a counterclockwise polygon, between
/// the edges towards `next` and `prev`.
pub fn interior_angle2(prev: &Vec2, v: &Vec2, next: &Vec2) -> f64 {
    let e1 = next - v;
    let e2 = prev - v;
    let a = cross2(&e1, &e2).atan2(e1.dot(&e2));
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

pub fn polygon_area2(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross2(&poly[i], &poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Winding-number containment for a closed polygon; boundary points count as
/// inside when within `tol`.
pub fn point_in_polygon2(p: &Vec2, poly: &[Vec2], tol: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        if point_segment_distance2(p, &poly[i], &poly[(i + 1) % n]) <= tol {
            return true;
        }
    }
    let mut wn = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a.y <= p.y {
            if b.y > p.y && cross2(&(b - a), &(p - a)) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && cross2(&(b - a), &(p - a)) < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

pub fn point_segment_distance2(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    let t = if l2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&d) / l2).clamp(0.0, 1.0)
    };
    (p - (a + d * t)).norm()
}

/// True when the open segments cross at a single interior point.
pub fn segments_cross2(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2, tol: f64) -> bool {
    let d1 = cross2(&(b - a), &(c - a));
    let d2 = cross2(&(b - a), &(d - a));
    let d3 = cross2(&(d - c), &(a - c));
    let d4 = cross2(&(d - c), &(b - c));
    let s = (b - a).norm() * (d - c).norm() * tol;
    ((d1 > s && d2 < -s) || (d1 < -s && d2 > s)) && ((d3 > s && d4 < -s) || (d3 < -s && d4 > s))
}

/// Largest separation of two convex polygons along their edge normals;
/// positive when disjoint, negative (the overlap depth) when interiors meet.
pub fn convex_separation2(p: &[Vec2], q: &[Vec2]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (poly, other) in [(p, q), (q, p)] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let nrm = Vec2::new(e.y, -e.x).normalize();
            let (pmin, pmax) = project2(poly, &nrm);
            let (qmin, qmax) = project2(other, &nrm);
            best = best.max((qmin - pmax).max(pmin - qmax));
        }
    }
    best
}

fn project2(poly: &[Vec2], axis: &Vec2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        })
}

/// Distance between two disjoint triangles in a plane.
pub fn triangle_distance2(p: &[Vec2; 3], q: &[Vec2; 3]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..3 {
        for j in 0..3 {
            d = d.min(point_segment_distance2(&p[i], &q[j], &q[(j + 1) % 3]));
            d = d.min(point_segment_distance2(&q[i], &p[j], &p[(j + 1) % 3]));
        }
    }
    d
}

/// Ear-clipping triangulation of a simple counterclockwise polygon.
pub fn triangulate_polygon2(poly: &[Vec2]) -> Option<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len().saturating_sub(2));
    let scale = poly.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
            if cross2(&(b - a), &(c - b)) <= 1e-14 * scale * scale {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                j != ia && j != ib && j != ic && point_in_triangle2(&poly[j], &a, &b, &c)
            });
            if !blocked {
                out.push([ia, ib, ic]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return None;
        }
    }
    out.push([idx[0], idx[1], idx[2]]);
    Some(out)
}

fn point_in_triangle2(p: &Vec2, a: &Vec2, b: &Vec2, c: &Vec2) -> bool {
    let d1 = cross2(&(b - a), &(p - a));
    let d2 = cross2(&(c - b), &(p - b));
    let d3 = cross2(&(a - c), &(p - c));
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

/// Points on a triangle on a barycentric lattice with `n` subdivisions.
pub fn triangle_lattice(t: &[Vec3; 3], n: usize) -> Vec<Vec3> {
    let n = n.max(1);
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            out.push(t[0] * (1.0 - a - b) + t[1] * a + t[2] * b);
        }
    }
    out
}
