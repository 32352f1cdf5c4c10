//! Green's functions with zero trace on an augmented box, split into an
//! analytic Kelvin part and a finite element corrector; the S functional,
//! its h-scaling near a face and the Alessandrini pairing.

mod quadrature;
mod rongved;

pub use quadrature::{tet_points, visit, AdaptiveRule};
pub use rongved::{
    default_probes, rongved_fem_oracle, RongvedOracleOptions, RongvedProbe, RongvedStudy,
};

use crate::elasticity::{BiphaseMaterial, IsotropicElastic, Lame};
use crate::forward::{
    dtn_assemble, BoxFace, DirichletSolver, DtnError, Fem, GridSpec, Mesh, MeshError, Sigma,
    SolveError, SolverKind,
};
use crate::geometry::{segment_distance, BoxDomain, Mat3, Vec3};
use crate::kernels::{kelvin, KernelError};
use crate::polyhedra::Polyhedron;
use crate::shape_deriv::fit_slope;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreensError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("pole {0:?} lies on an edge of the inclusion")]
    PoleOnEdge([f64; 3]),
    #[error(
        "pole {pole:?} at distance {clearance:e} from the interface, local mesh size {spacing:e}"
    )]
    Resolution {
        pole: [f64; 3],
        clearance: f64,
        spacing: f64,
    },
    #[error("pole {0:?} is outside the augmented domain or on its boundary")]
    Outside([f64; 3]),
    #[error("collar does not contain the ball of radius {radius} around the anchor")]
    Collar { radius: f64 },
    #[error("Green's functions live on different meshes")]
    MeshMismatch,
}

/// Ω♯ = Ω ∪ Σ₀ ∪ Ω₀: the box Ω with a collar box Ω₀ glued on the square Σ₀
/// of one face, and an anchor P₀ for poles outside Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedDomain {
    pub omega: BoxDomain,
    pub face: BoxFace,
    /// Σ₀ as a box flat in the face axis.
    pub sigma0: BoxDomain,
    pub collar: BoxDomain,
    pub anchor: Vec3,
    pub r_sharp: f64,
    pub zeta: f64,
}

impl AugmentedDomain {
    /// Σ₀ is the square of half-width `half` centred on the face, the collar
    /// has height 5r♯ with r♯ = ζr₀ and P₀ sits at its mid-height.
    pub fn new(
        omega: BoxDomain,
        face: BoxFace,
        half: f64,
        r0: f64,
        zeta: f64,
    ) -> Result<Self, GreensError> {
        let r_sharp = zeta * r0;
        let x = face.coordinate(&omega);
        let out = face.outward();
        let mut c = omega.center();
        c[face.axis] = x;
        let mut lo = c;
        let mut hi = c;
        for k in 0..3 {
            if k != face.axis {
                lo[k] -= half;
                hi[k] += half;
            }
        }
        let sigma0 = BoxDomain::new(lo, hi);
        let far = c + out * (5.0 * r_sharp);
        let collar = BoxDomain::new(lo.inf(&far), hi.sup(&far));
        let anchor = c + out * (2.5 * r_sharp);
        if collar.depth(&anchor) < 2.0 * r_sharp {
            return Err(GreensError::Collar {
                radius: 2.0 * r_sharp,
            });
        }
        Ok(Self {
            omega,
            face,
            sigma0,
            collar,
            anchor,
            r_sharp,
            zeta,
        })
    }

    pub fn default_for(omega: BoxDomain, r0: f64) -> Result<Self, GreensError> {
        Self::new(omega, BoxFace::TOP, r0, r0, 0.25)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.omega.contains(x) || self.collar.contains(x)
    }

    pub fn bounds(&self) -> BoxDomain {
        self.omega.union(&self.collar)
    }

    /// Grid over the bounding box with breaks on Ω and the collar.
    pub fn spec(&self, h: f64) -> GridSpec {
        GridSpec::uniform(self.bounds(), h)
            .with_box_breaks(&self.omega)
            .with_box_breaks(&self.collar)
    }

    /// Ω♯ mesh conforming to the inclusions; the tag is that of the first.
    pub fn mesh(&self, spec: &GridSpec, inclusions: &[&Polyhedron]) -> Result<Mesh, GreensError> {
        let spec = spec
            .clone()
            .with_box_breaks(&self.omega)
            .with_box_breaks(&self.collar);
        Ok(Mesh::inclusions_in(&spec, inclusions, |c| {
            self.contains(c)
        })?)
    }
}

/// Which constant tensor carries the singular part at a pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PoleKind {
    Interior,
    Exterior,
    /// Within r̄ of this face; Γ⁰ is the Kelvin matrix of the pole side.
    HalfSpace {
        face: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleClass {
    pub kind: PoleKind,
    pub inside: bool,
    pub boundary_distance: f64,
    pub edge_distance: f64,
    /// r̄(y): half the distance to the edge set.
    pub rbar: f64,
}

pub fn classify_pole(d: &Polyhedron, y: &Vec3) -> Result<PoleClass, GreensError> {
    let v = d.vertices();
    let edge_distance = d
        .edges()
        .iter()
        .map(|e| segment_distance(y, y, &v[e.v[0]], &v[e.v[1]]))
        .fold(f64::INFINITY, f64::min);
    if edge_distance <= 1e-9 * d.diam() {
        return Err(GreensError::PoleOnEdge((*y).into()));
    }
    let rbar = edge_distance / 2.0;
    let boundary_distance = d.boundary_distance(y);
    let inside = d.contains(y);
    let kind = if boundary_distance >= rbar {
        if inside {
            PoleKind::Interior
        } else {
            PoleKind::Exterior
        }
    } else {
        let face = (0..d.faces().len())
            .min_by(|&a, &b| {
                let (na, ca) = d.plane(a);
                let (nb, cb) = d.plane(b);
                (na.dot(y) - ca).abs().total_cmp(&(nb.dot(y) - cb).abs())
            })
            .expect("polyhedron has faces");
        PoleKind::HalfSpace { face }
    };
    Ok(PoleClass {
        kind,
        inside,
        boundary_distance,
        edge_distance,
        rbar,
    })
}

/// G♯(·, y)l = Γ⁰(·, y)l + w.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenFunction {
    pub pole: Vec3,
    pub direction: Vec3,
    pub class: PoleClass,
    pub singular: IsotropicElastic,
    /// Corrector w at the mesh nodes.
    pub w: Vec<f64>,
    pub residual: f64,
}

/// Load −∫(ℂ_T − ℂ_y)∇(Γ⁰l)·∇φ of the corrector, full length.
pub fn corrector_load(
    fem: &Fem,
    mesh: &Mesh,
    singular: &IsotropicElastic,
    y: &Vec3,
    l: &Vec3,
    rule: &AdaptiveRule,
) -> Result<Vec<f64>, KernelError> {
    let cy = singular.lame();
    let mut b = vec![0.0; fem.dofs()];
    for (t, tet) in fem.tets.iter().enumerate() {
        let dc: Lame = fem.lame[t] - cy;
        if dc.lambda == 0.0 && dc.mu == 0.0 {
            continue;
        }
        let mut integral = Mat3::zeros();
        let mut err = None;
        visit(
            &mesh.tet_points(t),
            &[*y],
            rule,
            &mut |x, w| match kelvin(x, y, singular) {
                Ok(k) => integral += k.displacement_gradient(l) * w,
                Err(e) => err = Some(e),
            },
        );
        if let Some(e) = err {
            return Err(e);
        }
        let s = dc.apply(&integral);
        for (a, &n) in tet.iter().enumerate() {
            let r = s * fem.grads[t][a];
            for i in 0..3 {
                b[3 * n + i] -= r[i];
            }
        }
    }
    Ok(b)
}

/// Corrector solves on one mesh and one coefficient field.
pub struct GreenSystem {
    pub mesh: Mesh,
    pub fem: Fem,
    pub inclusion: Polyhedron,
    pub materials: BiphaseMaterial,
    pub rule: AdaptiveRule,
    /// Poles closer to the interface than this many local mesh sizes are rejected.
    pub resolve_factor: f64,
    fixed: Vec<bool>,
    solver: DirichletSolver,
}

impl GreenSystem {
    /// `mesh.inside` must tag `inclusion`.
    pub fn new(
        mesh: Mesh,
        inclusion: Polyhedron,
        materials: BiphaseMaterial,
        kind: SolverKind,
    ) -> Result<Self, GreensError> {
        let fem = Fem::biphase(&mesh, materials.interior.lame(), materials.exterior.lame())?;
        let fixed = mesh.boundary_nodes();
        let solver = DirichletSolver::new(&fem, &fixed, kind)?;
        Ok(Self {
            mesh,
            fem,
            inclusion,
            materials,
            rule: AdaptiveRule::default(),
            resolve_factor: 1.0,
            fixed,
            solver,
        })
    }

    /// Diameter of the tet whose centroid is nearest to y.
    pub fn local_spacing(&self, y: &Vec3) -> f64 {
        let t = (0..self.mesh.tets.len())
            .min_by(|&a, &b| {
                (self.mesh.centroid(a) - y)
                    .norm_squared()
                    .total_cmp(&(self.mesh.centroid(b) - y).norm_squared())
            })
            .expect("non-empty mesh");
        let p = self.mesh.tet_points(t);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((p[i] - p[j]).norm());
            }
        }
        d
    }

    pub fn classify(&self, y: &Vec3) -> Result<(PoleClass, IsotropicElastic), GreensError> {
        let class = classify_pole(&self.inclusion, y)?;
        let m = if class.inside {
            self.materials.interior
        } else {
            self.materials.exterior
        };
        Ok((class, m))
    }

    fn check_pole(&self, y: &Vec3, class: &PoleClass) -> Result<(), GreensError> {
        let bounds = self.mesh.bounds();
        if !bounds.contains(y)
            || self
                .fixed
                .iter()
                .zip(&self.mesh.nodes)
                .any(|(&f, x)| f && (x - y).norm() < 1e-12)
        {
            return Err(GreensError::Outside((*y).into()));
        }
        if !self.materials.is_homogeneous() {
            let spacing = self.local_spacing(y);
            if class.boundary_distance < self.resolve_factor * spacing {
                return Err(GreensError::Resolution {
                    pole: (*y).into(),
                    clearance: class.boundary_distance,
                    spacing,
                });
            }
        }
        Ok(())
    }

    /// Classification and resolution checks for a pole.
    pub fn admit(&self, y: &Vec3) -> Result<(), GreensError> {
        let (class, _) = self.classify(y)?;
        self.check_pole(y, &class)
    }

    pub fn corrector_solve(&self, y: &Vec3, l: &Vec3) -> Result<GreenFunction, GreensError> {
        Ok(self.correctors(&[(*y, *l)])?.pop().expect("one pole"))
    }

    pub fn correctors(&self, poles: &[(Vec3, Vec3)]) -> Result<Vec<GreenFunction>, GreensError> {
        let mut heads = Vec::with_capacity(poles.len());
        let mut gs = Vec::with_capacity(poles.len());
        let mut fs = Vec::with_capacity(poles.len());
        for (y, l) in poles {
            let (class, singular) = self.classify(y)?;
            self.check_pole(y, &class)?;
            let mut g = vec![0.0; self.fem.dofs()];
            for (n, x) in self.mesh.nodes.iter().enumerate() {
                if self.fixed[n] {
                    let v = -kelvin(x, y, &singular)?.matrix * l;
                    g[3 * n..3 * n + 3].copy_from_slice(v.as_slice());
                }
            }
            gs.push(g);
            fs.push(corrector_load(
                &self.fem, &self.mesh, &singular, y, l, &self.rule,
            )?);
            heads.push((*y, *l, class, singular));
        }
        let sols = self.solver.solve_many(&self.fem, &gs, Some(&fs))?;
        Ok(heads
            .into_iter()
            .zip(sols)
            .map(
                |((pole, direction, class, singular), (w, rep))| GreenFunction {
                    pole,
                    direction,
                    class,
                    singular,
                    w,
                    residual: rep.residual,
                },
            )
            .collect())
    }

    /// ∇(G♯l) at a point x of tet t.
    pub fn gradient_at(&self, g: &GreenFunction, t: usize, x: &Vec3) -> Result<Mat3, GreensError> {
        Ok(
            kelvin(x, &g.pole, &g.singular)?.displacement_gradient(&g.direction)
                + self.fem.gradient(t, &g.w),
        )
    }

    /// G♯(x_node, y)l.
    pub fn value_at_node(&self, g: &GreenFunction, node: usize) -> Result<Vec3, GreensError> {
        let x = self.mesh.nodes[node];
        let w = Vec3::new(g.w[3 * node], g.w[3 * node + 1], g.w[3 * node + 2]);
        Ok(kelvin(&x, &g.pole, &g.singular)?.matrix * g.direction + w)
    }

    /// |G♯(x,y)l·m − G♯(y,x)m·l| for node pairs, relative to the larger side.
    pub fn symmetry_residuals(
        &self,
        pairs: &[(usize, usize)],
        l: &Vec3,
        m: &Vec3,
    ) -> Result<Vec<f64>, GreensError> {
        let mut poles = Vec::new();
        for &(a, b) in pairs {
            poles.push((self.mesh.nodes[b], *l));
            poles.push((self.mesh.nodes[a], *m));
        }
        let gs = self.correctors(&poles)?;
        let mut out = Vec::with_capacity(pairs.len());
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let xy = self.value_at_node(&gs[2 * k], a)?.dot(m);
            let yx = self.value_at_node(&gs[2 * k + 1], b)?.dot(l);
            out.push((xy - yx).abs() / xy.abs().max(yx.abs()).max(f64::MIN_POSITIVE));
        }
        Ok(out)
    }
}

/// S = ∫_{D₀}(ℂⁱ−ℂᵉ)∇(G₀♯l)·∇(G₁♯m) − ∫_{D₁}(same).
pub fn s_functional(
    s0: &GreenSystem,
    g0: &GreenFunction,
    s1: &GreenSystem,
    g1: &GreenFunction,
) -> Result<f64, GreensError> {
    if s0.mesh.tets != s1.mesh.tets || s0.mesh.nodes.len() != s1.mesh.nodes.len() {
        return Err(GreensError::MeshMismatch);
    }
    let diff: Lame = s0.materials.interior.lame() - s0.materials.exterior.lame();
    if diff.lambda == 0.0 && diff.mu == 0.0 {
        return Ok(0.0);
    }
    let poles = [g0.pole, g1.pole];
    let mut s = 0.0;
    let mut err = None;
    for t in 0..s0.mesh.tets.len() {
        let chi = s0.mesh.inside[t] as i32 - s1.mesh.inside[t] as i32;
        if chi == 0 {
            continue;
        }
        let w0 = s0.fem.gradient(t, &g0.w);
        let w1 = s1.fem.gradient(t, &g1.w);
        let mut acc = 0.0;
        visit(&s0.mesh.tet_points(t), &poles, &s0.rule, &mut |x, w| {
            let a =
                kelvin(x, &g0.pole, &g0.singular).map(|k| k.displacement_gradient(&g0.direction));
            let b =
                kelvin(x, &g1.pole, &g1.singular).map(|k| k.displacement_gradient(&g1.direction));
            match (a, b) {
                (Ok(a), Ok(b)) => acc += w * diff.apply(&(a + w0)).component_mul(&(b + w1)).sum(),
                (Err(e), _) | (_, Err(e)) => err = Some(e),
            }
        });
        s += chi as f64 * acc;
    }
    match err {
        Some(e) => Err(e.into()),
        None => Ok(s),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SScalingConfig {
    /// Face point P and the outward unit normal along which the poles move.
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub h_list: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub directions: Vec<usize>,
    pub band: [f64; 2],
}

impl SScalingConfig {
    pub fn new(point: Vec3, normal: Vec3, h_list: Vec<f64>) -> Self {
        Self {
            point: point.into(),
            normal: normal.normalize().into(),
            h_list,
            lambdas: vec![2.0 / 3.0, 0.75, 0.8],
            directions: vec![0, 1, 2],
            band: [-1.3, -0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SRow {
    pub h: f64,
    pub lambda: f64,
    pub direction: usize,
    pub s: f64,
    /// Excluded from fits when a pole is not resolved by the mesh.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SFit {
    pub lambda: f64,
    pub direction: usize,
    pub slope: f64,
    pub points: usize,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SScalingTable {
    pub rows: Vec<SRow>,
    pub fits: Vec<SFit>,
    pub warnings: Vec<String>,
    /// Some λ_w has a slope inside the band for some direction.
    pub passed: bool,
    /// Largest |S| when the phases coincide; no fit is made then.
    pub homogeneous_max: Option<f64>,
}

impl SScalingTable {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "h,lambda_w,direction,S,resolved")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:.6},{},{:.12e},{}",
                r.h, r.lambda, r.direction, r.s, r.resolved
            )?;
        }
        writeln!(w)?;
        writeln!(w, "lambda_w,direction,slope,points,in_band")?;
        for f in &self.fits {
            writeln!(
                w,
                "{:.6},{},{:.6},{},{}",
                f.lambda, f.direction, f.slope, f.points, f.in_band
            )?;
        }
        Ok(())
    }
}

/// |S(y_h, w_h; eᵢ, eᵢ)| for y_h = P + h n, w_h = P + λ_w h n.
pub fn s_scaling_experiment(
    s0: &GreenSystem,
    s1: &GreenSystem,
    cfg: &SScalingConfig,
) -> Result<SScalingTable, GreensError> {
    let p = Vec3::from(cfg.point);
    let n = Vec3::from(cfg.normal);
    let unit = |i: usize| {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        e
    };
    let mut warnings = Vec::new();
    let mut admit = |sys: &GreenSystem, y: &Vec3, h: f64| -> Result<bool, GreensError> {
        match sys.admit(y) {
            Ok(()) => Ok(true),
            Err(GreensError::Resolution {
                clearance, spacing, ..
            }) => {
                warnings.push(format!(
                    "h = {h}: pole clearance {clearance:e} below mesh resolution {spacing:e}, excluded"
                ));
                Ok(false)
            }
            Err(e) => Err(e),
        }
    };
    // one batch of corrector solves per system
    let mut keys0 = Vec::new();
    let mut keys1 = Vec::new();
    for &h in &cfg.h_list {
        if admit(s0, &(p + n * h), h)? {
            keys0.push(h);
        }
        for &lam in &cfg.lambdas {
            if admit(s1, &(p + n * (lam * h)), h)? {
                keys1.push((h, lam));
            }
        }
    }
    let poles0: Vec<(Vec3, Vec3)> = keys0
        .iter()
        .flat_map(|&h| cfg.directions.iter().map(move |&i| (p + n * h, unit(i))))
        .collect();
    let poles1: Vec<(Vec3, Vec3)> = keys1
        .iter()
        .flat_map(|&(h, lam)| {
            cfg.directions
                .iter()
                .map(move |&i| (p + n * (lam * h), unit(i)))
        })
        .collect();
    let g0 = s0.correctors(&poles0)?;
    let g1 = s1.correctors(&poles1)?;
    let nd = cfg.directions.len();
    let mut rows = Vec::new();
    for &h in &cfg.h_list {
        let k0 = keys0.iter().position(|&x| x == h);
        for &lam in &cfg.lambdas {
            let k1 = keys1.iter().position(|&x| x == (h, lam));
            for (d, &i) in cfg.directions.iter().enumerate() {
                let (s, resolved) = match (k0, k1) {
                    (Some(a), Some(b)) => (
                        s_functional(s0, &g0[a * nd + d], s1, &g1[b * nd + d])?,
                        true,
                    ),
                    _ => (f64::NAN, false),
                };
                rows.push(SRow {
                    h,
                    lambda: lam,
                    direction: i,
                    s,
                    resolved,
                });
            }
        }
    }
    let homogeneous = s0.materials.is_homogeneous();
    let mut fits = Vec::new();
    if !homogeneous {
        for &lam in &cfg.lambdas {
            for &i in &cfg.directions {
                let (x, y): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.resolved && r.lambda == lam && r.direction == i && r.s != 0.0)
                    .map(|r| (r.h.ln(), r.s.abs().ln()))
                    .unzip();
                if x.len() >= 2 {
                    let slope = fit_slope(&x, &y);
                    fits.push(SFit {
                        lambda: lam,
                        direction: i,
                        slope,
                        points: x.len(),
                        in_band: slope >= cfg.band[0] && slope <= cfg.band[1],
                    });
                }
            }
        }
    }
    let homogeneous_max = homogeneous.then(|| rows.iter().map(|r| r.s.abs()).fold(0.0, f64::max));
    Ok(SScalingTable {
        passed: fits.iter().any(|f| f.in_band),
        rows,
        fits,
        warnings,
        homogeneous_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlessandriniCheck {
    pub s: f64,
    pub pairing: f64,
    pub relative_error: f64,
}

/// S for poles in the collar against ⟨(Λ_{D₀} − Λ_{D₁})G₀♯l, G₁♯m⟩ on Σ, the
/// latter from DtN assemblies on the Ω part of the mesh.
pub fn alessandrini_check(
    domain: &AugmentedDomain,
    s0: &GreenSystem,
    s1: &GreenSystem,
    poles: [(Vec3, Vec3); 2],
    kind: SolverKind,
) -> Result<AlessandriniCheck, GreensError> {
    let g0 = s0.corrector_solve(&poles[0].0, &poles[0].1)?;
    let g1 = s1.corrector_solve(&poles[1].0, &poles[1].1)?;
    let s = s_functional(s0, &g0, s1, &g1)?;
    let in_omega = |m: &Mesh, t: usize| domain.omega.contains(&m.centroid(t));
    let (m0, old) = s0.mesh.restrict(|t| in_omega(&s0.mesh, t));
    let m1 = m0.with_inside(s1.mesh.restrict(|t| in_omega(&s1.mesh, t)).0.inside);
    let sigma = Sigma::on_face(&m0, &domain.omega, domain.face)?;
    let trace = |sys: &GreenSystem, g: &GreenFunction| -> Result<Vec<f64>, GreensError> {
        let mut v = Vec::with_capacity(sigma.dofs());
        for &k in &sigma.nodes {
            v.extend_from_slice(sys.value_at_node(g, old[k])?.as_slice());
        }
        Ok(v)
    };
    let f = trace(s0, &g0)?;
    let g = trace(s1, &g1)?;
    let mats = s0.materials;
    let l0 = dtn_assemble(
        &m0,
        &Fem::biphase(&m0, mats.interior.lame(), mats.exterior.lame())?,
        &sigma,
        kind,
    )?;
    let l1 = dtn_assemble(
        &m1,
        &Fem::biphase(&m1, mats.interior.lame(), mats.exterior.lame())?,
        &sigma,
        kind,
    )?;
    let pairing = l0.pair(&f, &g) - l1.pair(&f, &g);
    Ok(AlessandriniCheck {
        s,
        pairing,
        relative_error: (s - pairing).abs() / s.abs().max(pairing.abs()).max(f64::MIN_POSITIVE),
    })
}
