//! Tetrahedral meshes of boxes and box unions: graded tensor grids split into
//! Kuhn tetrahedra, with conforming plane cuts for inclusion faces that are not
//! grid-aligned.

use crate::geometry::{BoxDomain, Vec3};
use crate::polyhedra::Polyhedron;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("inclusion is not convex")]
    NonConvex,
    #[error("inclusion must lie strictly inside the box")]
    Outside,
    #[error("tetrahedron {0} is inverted or flat (volume {1:e})")]
    Quality(usize, f64),
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Local refinement around a point: spacing grows linearly from `h` at
/// distance `radius` with slope `ratio − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focus {
    pub center: Vec3,
    pub radius: f64,
    pub h: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub bounds: BoxDomain,
    pub h: f64,
    /// Coordinates each axis must contain.
    pub breaks: [Vec<f64>; 3],
    pub focus: Vec<Focus>,
}

impl GridSpec {
    pub fn uniform(bounds: BoxDomain, h: f64) -> Self {
        Self {
            bounds,
            h,
            breaks: Default::default(),
            focus: Vec::new(),
        }
    }

    /// Adds the bounding planes of an axis-aligned box as breaks.
    pub fn with_box_breaks(mut self, b: &BoxDomain) -> Self {
        for k in 0..3 {
            self.breaks[k].push(b.lo[k]);
            self.breaks[k].push(b.hi[k]);
        }
        self
    }

    pub fn with_focus(mut self, f: Focus) -> Self {
        self.focus.push(f);
        self
    }

    fn spacing(&self, axis: usize, x: f64) -> f64 {
        self.focus
            .iter()
            .map(|f| f.h + (f.ratio - 1.0) * ((x - f.center[axis]).abs() - f.radius).max(0.0))
            .fold(self.h, f64::min)
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let (lo, hi) = (self.bounds.lo[axis], self.bounds.hi[axis]);
        let tol = 1e-12 * (hi - lo);
        let mut cuts: Vec<f64> = self.breaks[axis]
            .iter()
            .copied()
            .filter(|&b| b > lo + tol && b < hi - tol)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= tol);
        let mut out = vec![cuts[0]];
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            // cumulative ∫ dx / s(x) on a fine sampling, then equidistribute
            let smin = (0..=64)
                .map(|i| self.spacing(axis, a + (b - a) * i as f64 / 64.0))
                .fold(f64::INFINITY, f64::min);
            let m = (((b - a) / smin) * 8.0).ceil().clamp(64.0, 200_000.0) as usize;
            let xs: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
            let mut cum = vec![0.0; m + 1];
            for i in 0..m {
                let f0 = 1.0 / self.spacing(axis, xs[i]);
                let f1 = 1.0 / self.spacing(axis, xs[i + 1]);
                cum[i + 1] = cum[i] + 0.5 * (f0 + f1) * (xs[i + 1] - xs[i]);
            }
            let total = cum[m];
            let n = ((total - 1e-9).ceil() as usize).max(1);
            let mut j = 0;
            for k in 1..n {
                let target = total * k as f64 / n as f64;
                while cum[j + 1] < target {
                    j += 1;
                }
                let s = (target - cum[j]) / (cum[j + 1] - cum[j]);
                out.push(xs[j] + s * (xs[j + 1] - xs[j]));
            }
            out.push(b);
        }
        out
    }
}

/// The six faces of an axis-aligned box, numbered `2·axis + side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxFace {
    pub axis: usize,
    /// `true` for the face at the upper bound.
    pub upper: bool,
}

impl BoxFace {
    pub const TOP: BoxFace = BoxFace {
        axis: 2,
        upper: true,
    };

    pub fn outward(&self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis] = if self.upper { 1.0 } else { -1.0 };
        n
    }

    pub fn coordinate(&self, b: &BoxDomain) -> f64 {
        if self.upper {
            b.hi[self.axis]
        } else {
            b.lo[self.axis]
        }
    }
}

/// A facet shared by a tet inside the tagged region and one outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceFacet {
    pub nodes: [usize; 3],
    pub inner: usize,
    pub outer: usize,
    /// Unit normal pointing out of the tagged region.
    pub normal: Vec3,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshQuality {
    pub min_volume: f64,
    pub min_dihedral: f64,
    pub max_dihedral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Vec3>,
    /// Positively oriented node quadruples.
    pub tets: Vec<[usize; 4]>,
    /// Inclusion tag per tet.
    pub inside: Vec<bool>,
}

const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

fn signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

fn sorted3(f: [usize; 3]) -> [usize; 3] {
    let mut s = f;
    s.sort_unstable();
    s
}

impl Mesh {
    /// Kuhn subdivision of the tensor grid of `spec`, keeping the cells whose
    /// centre satisfies `keep`.
    pub fn grid(spec: &GridSpec, keep: impl Fn(&Vec3) -> bool) -> Mesh {
        let ax: [Vec<f64>; 3] = std::array::from_fn(|k| spec.axis(k));
        let (nx, ny, nz) = (ax[0].len(), ax[1].len(), ax[2].len());
        let id = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
        let mut used = vec![usize::MAX; nx * ny * nz];
        let mut nodes = Vec::new();
        let mut tets = Vec::new();
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for i in 0..nx - 1 {
            for j in 0..ny - 1 {
                for k in 0..nz - 1 {
                    let c = Vec3::new(
                        0.5 * (ax[0][i] + ax[0][i + 1]),
                        0.5 * (ax[1][j] + ax[1][j + 1]),
                        0.5 * (ax[2][k] + ax[2][k + 1]),
                    );
                    if !keep(&c) {
                        continue;
                    }
                    let mut node = |o: [usize; 3]| {
                        let g = id(i + o[0], j + o[1], k + o[2]);
                        if used[g] == usize::MAX {
                            used[g] = nodes.len();
                            nodes.push(Vec3::new(
                                ax[0][i + o[0]],
                                ax[1][j + o[1]],
                                ax[2][k + o[2]],
                            ));
                        }
                        used[g]
                    };
                    for p in perms {
                        let mut o = [0usize; 3];
                        let mut t = [0usize; 4];
                        t[0] = node(o);
                        for (s, &a) in p.iter().enumerate() {
                            o[a] = 1;
                            t[s + 1] = node(o);
                        }
                        tets.push(t);
                    }
                }
            }
        }
        let mut m = Mesh {
            inside: vec![false; tets.len()],
            nodes,
            tets,
        };
        m.orient();
        m
    }

    /// Box mesh conforming to a convex inclusion: grid breaks at the inclusion
    /// bounding box and a plane cut along every face.
    pub fn inclusion(omega: &BoxDomain, p: &Polyhedron, h: f64) -> Result<Mesh, MeshError> {
        Self::inclusions(&GridSpec::uniform(*omega, h), &[p])
    }

    /// Mesh conforming to several convex inclusions; `inside` tags the first.
    pub fn inclusions(spec: &GridSpec, ps: &[&Polyhedron]) -> Result<Mesh, MeshError> {
        Self::inclusions_in(spec, ps, |_| true)
    }

    /// As `inclusions`, on the grid cells whose centre satisfies `keep`.
    pub fn inclusions_in(
        spec: &GridSpec,
        ps: &[&Polyhedron],
        keep: impl Fn(&Vec3) -> bool,
    ) -> Result<Mesh, MeshError> {
        let mut spec = spec.clone();
        for p in ps {
            if !p.is_convex() {
                return Err(MeshError::NonConvex);
            }
            let bb = p.bounding_box();
            if !(0..3).all(|k| bb.lo[k] > spec.bounds.lo[k] && bb.hi[k] < spec.bounds.hi[k]) {
                return Err(MeshError::Outside);
            }
            spec = spec.with_box_breaks(&bb);
        }
        let mut m = Mesh::grid(&spec, keep);
        for p in ps {
            for f in 0..p.faces().len() {
                let (n, c) = p.plane(f);
                m.cut(&n, c);
            }
        }
        if let Some(p) = ps.first() {
            m.inside = m.tag(p);
        }
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), MeshError> {
        for (t, v) in self.volumes().into_iter().enumerate() {
            if !(v > 0.0) {
                return Err(MeshError::Quality(t, v));
            }
        }
        Ok(())
    }

    fn orient(&mut self) {
        for t in &mut self.tets {
            let [a, b, c, d] = t.map(|i| self.nodes[i]);
            if signed_volume(&a, &b, &c, &d) < 0.0 {
                t.swap(2, 3);
            }
        }
    }

    pub fn tet_points(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|i| self.nodes[i])
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.tets.len())
            .map(|t| {
                let [a, b, c, d] = self.tet_points(t);
                signed_volume(&a, &b, &c, &d)
            })
            .collect()
    }

    pub fn centroid(&self, t: usize) -> Vec3 {
        self.tet_points(t).iter().sum::<Vec3>() / 4.0
    }

    /// Region tag by centroid containment.
    pub fn tag(&self, p: &Polyhedron) -> Vec<bool> {
        (0..self.tets.len())
            .map(|t| p.contains(&self.centroid(t)))
            .collect()
    }

    pub fn with_inside(&self, inside: Vec<bool>) -> Mesh {
        Mesh {
            inside,
            ..self.clone()
        }
    }

    /// Submesh of the tets selected by `keep`, with the old index of every
    /// new node.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> (Mesh, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.nodes.len()];
        let mut old = Vec::new();
        let mut tets = Vec::new();
        let mut inside = Vec::new();
        for (t, tet) in self.tets.iter().enumerate() {
            if !keep(t) {
                continue;
            }
            tets.push(tet.map(|i| {
                if new_index[i] == usize::MAX {
                    new_index[i] = old.len();
                    old.push(i);
                }
                new_index[i]
            }));
            inside.push(self.inside[t]);
        }
        let nodes = old.iter().map(|&i| self.nodes[i]).collect();
        (
            Mesh {
                nodes,
                tets,
                inside,
            },
            old,
        )
    }

    /// Same connectivity with nodes moved by `f`.
    pub fn moved(&self, f: impl Fn(&Vec3) -> Vec3) -> Mesh {
        Mesh {
            nodes: self.nodes.iter().map(f).collect(),
            ..self.clone()
        }
    }

    pub fn bounds(&self) -> BoxDomain {
        BoxDomain::bounding(&self.nodes)
    }

    /// Splits every tet crossed by the plane n·x = c into tets conformingly.
    /// Each piece is triangulated by pulling from its lowest-index vertex and
    /// fanning every face from its own lowest-index vertex, so shared faces
    /// are split identically on both sides.
    pub fn cut(&mut self, n: &Vec3, c: f64) {
        let scale = self.bounds().diam();
        let tol = 1e-8 * scale;
        let mut s: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for x in &mut self.nodes {
            let v = n.dot(x) - c;
            if v.abs() < tol {
                *x -= n * v;
                s.push(0.0);
            } else {
                s.push(v);
            }
        }
        let mut edge_nodes: HashMap<(usize, usize), usize> = HashMap::new();
        let mut tets = Vec::with_capacity(self.tets.len());
        let mut inside = Vec::with_capacity(self.tets.len());
        for (t, tet) in self.tets.clone().into_iter().enumerate() {
            let pos = tet.iter().any(|&i| s[i] > 0.0);
            let neg = tet.iter().any(|&i| s[i] < 0.0);
            if !(pos && neg) {
                tets.push(tet);
                inside.push(self.inside[t]);
                continue;
            }
            let mut split = |i: usize, j: usize, nodes: &mut Vec<Vec3>, s: &mut Vec<f64>| {
                let key = (i.min(j), i.max(j));
                *edge_nodes.entry(key).or_insert_with(|| {
                    let (a, b) = (key.0, key.1);
                    let w = s[a] / (s[a] - s[b]);
                    nodes.push(nodes[a] + (nodes[b] - nodes[a]) * w);
                    s.push(0.0);
                    nodes.len() - 1
                })
            };
            for side in [1.0, -1.0] {
                let mut faces: Vec<Vec<usize>> = Vec::new();
                for lf in LOCAL_FACES {
                    let poly = lf.map(|k| tet[k]);
                    let mut out = Vec::new();
                    for e in 0..3 {
                        let (p, q) = (poly[e], poly[(e + 1) % 3]);
                        if side * s[p] >= 0.0 {
                            out.push(p);
                        }
                        if s[p] * s[q] < 0.0 {
                            out.push(split(p, q, &mut self.nodes, &mut s));
                        }
                    }
                    if out.len() >= 3 {
                        faces.push(out);
                    }
                }
                // cap: every on-plane vertex of this piece
                let mut cap: Vec<usize> = Vec::new();
                for f in &faces {
                    for &v in f {
                        if s[v] == 0.0 && !cap.contains(&v) {
                            cap.push(v);
                        }
                    }
                }
                if cap.len() >= 3 {
                    let ctr = cap.iter().map(|&v| self.nodes[v]).sum::<Vec3>() / cap.len() as f64;
                    let (u, w) = crate::geometry::plane_frame(n);
                    cap.sort_by(|&a, &b| {
                        let pa = self.nodes[a] - ctr;
                        let pb = self.nodes[b] - ctr;
                        pa.dot(&w)
                            .atan2(pa.dot(&u))
                            .total_cmp(&pb.dot(&w).atan2(pb.dot(&u)))
                    });
                    faces.push(cap);
                }
                let apex = *faces.iter().flatten().min().expect("non-empty piece");
                for f in &faces {
                    if f.contains(&apex) {
                        continue;
                    }
                    let k0 = (0..f.len()).min_by_key(|&k| f[k]).unwrap();
                    let m = f.len();
                    for k in 1..m - 1 {
                        let (b, c2, d) = (f[k0], f[(k0 + k) % m], f[(k0 + k + 1) % m]);
                        let mut nt = [apex, b, c2, d];
                        let [pa, pb, pc, pd] = nt.map(|i| self.nodes[i]);
                        let v = signed_volume(&pa, &pb, &pc, &pd);
                        if v.abs() <= 1e-24 * scale.powi(3) {
                            continue;
                        }
                        if v < 0.0 {
                            nt.swap(2, 3);
                        }
                        tets.push(nt);
                        inside.push(self.inside[t]);
                    }
                }
            }
        }
        self.tets = tets;
        self.inside = inside;
    }

    /// Map from sorted facet triple to the (tet, local face) pairs containing it.
    fn facet_map(&self) -> HashMap<[usize; 3], Vec<(usize, usize)>> {
        let mut map: HashMap<[usize; 3], Vec<(usize, usize)>> =
            HashMap::with_capacity(2 * self.tets.len());
        for (t, tet) in self.tets.iter().enumerate() {
            for (lf, f) in LOCAL_FACES.iter().enumerate() {
                map.entry(sorted3(f.map(|k| tet[k])))
                    .or_default()
                    .push((t, lf));
            }
        }
        map
    }

    /// Boundary facets with outward orientation, in tet order.
    pub fn boundary_facets(&self) -> Vec<[usize; 3]> {
        let map = self.facet_map();
        let mut out = Vec::new();
        for (t, tet) in self.tets.iter().enumerate() {
            for (lf, f) in LOCAL_FACES.iter().enumerate() {
                let tri = f.map(|k| tet[k]);
                if map[&sorted3(tri)].len() == 1 {
                    out.push(self.outward(t, lf));
                }
            }
        }
        out
    }

    fn outward(&self, t: usize, lf: usize) -> [usize; 3] {
        let tet = self.tets[t];
        let mut tri = LOCAL_FACES[lf].map(|k| tet[k]);
        let [a, b, c] = tri.map(|i| self.nodes[i]);
        let opp = self.nodes[tet[lf]];
        if (b - a).cross(&(c - a)).dot(&(opp - a)) > 0.0 {
            tri.swap(1, 2);
        }
        tri
    }

    /// Node flags for the mesh boundary.
    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut b = vec![false; self.nodes.len()];
        for f in self.boundary_facets() {
            for i in f {
                b[i] = true;
            }
        }
        b
    }

    /// Facets between tets with `tags` true and tets with `tags` false.
    pub fn interface_facets(&self, tags: &[bool]) -> Vec<InterfaceFacet> {
        let map = self.facet_map();
        let mut out = Vec::new();
        for (t, tet) in self.tets.iter().enumerate() {
            if !tags[t] {
                continue;
            }
            for (lf, f) in LOCAL_FACES.iter().enumerate() {
                let key = sorted3(f.map(|k| tet[k]));
                let Some(&(o, _)) = map[&key].iter().find(|&&(o, _)| o != t) else {
                    continue;
                };
                if tags[o] {
                    continue;
                }
                let nodes = self.outward(t, lf);
                let [a, b, c] = nodes.map(|i| self.nodes[i]);
                let cr = (b - a).cross(&(c - a));
                out.push(InterfaceFacet {
                    nodes,
                    inner: t,
                    outer: o,
                    normal: cr.normalize(),
                    area: cr.norm() / 2.0,
                });
            }
        }
        out
    }

    /// Boundary facets lying on one face of `b`.
    pub fn box_face_facets(&self, b: &BoxDomain, face: BoxFace) -> Vec<[usize; 3]> {
        let x = face.coordinate(b);
        let tol = 1e-9 * b.diam();
        self.boundary_facets()
            .into_iter()
            .filter(|f| {
                f.iter()
                    .all(|&i| (self.nodes[i][face.axis] - x).abs() <= tol)
            })
            .collect()
    }

    /// V − E + F − T.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    edges.insert((t[a].min(t[b]), t[a].max(t[b])));
                }
            }
        }
        let faces = self.facet_map().len();
        let used: std::collections::HashSet<usize> = self.tets.iter().flatten().copied().collect();
        used.len() as i64 - edges.len() as i64 + faces as i64 - self.tets.len() as i64
    }

    pub fn quality(&self) -> MeshQuality {
        let mut q = MeshQuality {
            min_volume: f64::INFINITY,
            min_dihedral: f64::INFINITY,
            max_dihedral: 0.0,
        };
        for t in 0..self.tets.len() {
            let p = self.tet_points(t);
            q.min_volume = q.min_volume.min(signed_volume(&p[0], &p[1], &p[2], &p[3]));
            let normals: Vec<Vec3> = (0..4)
                .map(|lf| {
                    let [a, b, c] = LOCAL_FACES[lf].map(|k| p[k]);
                    let n = (b - a).cross(&(c - a)).normalize();
                    if n.dot(&(p[lf] - a)) > 0.0 {
                        -n
                    } else {
                        n
                    }
                })
                .collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    let ang =
                        std::f64::consts::PI - normals[i].dot(&normals[j]).clamp(-1.0, 1.0).acos();
                    q.min_dihedral = q.min_dihedral.min(ang);
                    q.max_dihedral = q.max_dihedral.max(ang);
                }
            }
        }
        q
    }

    /// Plain-text form: node count and coordinates, then tet count and
    /// indices with a region tag.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut s = String::new();
        writeln!(s, "{}", self.nodes.len()).unwrap();
        for x in &self.nodes {
            writeln!(s, "{:.17e} {:.17e} {:.17e}", x.x, x.y, x.z).unwrap();
        }
        writeln!(s, "{}", self.tets.len()).unwrap();
        for (t, tet) in self.tets.iter().enumerate() {
            writeln!(
                s,
                "{} {} {} {} {}",
                tet[0], tet[1], tet[2], tet[3], self.inside[t] as u8
            )
            .unwrap();
        }
        w.write_all(s.as_bytes())
    }

    pub fn read_text(r: impl BufRead) -> Result<Mesh, MeshError> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next = || -> Result<(usize, String), MeshError> {
            let (i, l) = lines.next().ok_or(MeshError::Parse {
                line: 0,
                msg: "unexpected end of input".into(),
            })?;
            Ok((i, l?))
        };
        fn parse<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, MeshError> {
            s.parse().map_err(|_| MeshError::Parse {
                line,
                msg: format!("bad number {s:?}"),
            })
        }
        let (i, l) = next()?;
        let nn: usize = parse(i, l.trim())?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (i, l) = next()?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|s| parse(i, s))
                .collect::<Result<_, _>>()?;
            if v.len() != 3 {
                return Err(MeshError::Parse {
                    line: i,
                    msg: "expected 3 coordinates".into(),
                });
            }
            nodes.push(Vec3::new(v[0], v[1], v[2]));
        }
        let (i, l) = next()?;
        let nt: usize = parse(i, l.trim())?;
        let mut tets = Vec::with_capacity(nt);
        let mut inside = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (i, l) = next()?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| parse(i, s))
                .collect::<Result<_, _>>()?;
            if v.len() != 5 || v[..4].iter().any(|&k| k >= nn) {
                return Err(MeshError::Parse {
                    line: i,
                    msg: "expected 4 node indices and a tag".into(),
                });
            }
            tets.push([v[0], v[1], v[2], v[3]]);
            inside.push(v[4] != 0);
        }
        let m = Mesh {
            nodes,
            tets,
            inside,
        };
        m.check()?;
        Ok(m)
    }
}
