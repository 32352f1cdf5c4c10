//! The DtN pairing along a deformation, F(t) = ∫ ℂ^{D_t}∇u_t·∇v_t, its
//! derivative at t = 0 in volume and interface form, the material derivative
//! and finite-difference checks.
//!
//! Φ_t acts on the mesh: the moved mesh at t has nodes x + t𝒰_h(x) with the
//! tags of the reference mesh, so the coefficient on Φ_t(T) is the one of T.
//! With 𝒰_h the nodal interpolant, F′(0) below is the exact derivative of the
//! discrete F.

use crate::elasticity::{BiphaseMaterial, IsotropicElastic, Lame};
use crate::forward::{
    dtn_assemble, DirichletSolver, DiscreteField, DtnError, Fem, Mesh, MeshError, Sigma,
    SolveError, SolverKind,
};
use crate::geometry::{segment_distance, Mat3, Vec3};
use crate::kernels::{kelvin, KernelError};
use crate::moment::{bfield, build_m};
use crate::polyhedra::Polyhedron;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error("moved mesh at t = {t} is not valid: {source}")]
    Inverted { t: f64, source: MeshError },
    #[error("deformation field does not vanish at boundary node {0}")]
    FieldOnBoundary(usize),
    #[error("trace has {got} entries, Σ has {expected}")]
    Trace { expected: usize, got: usize },
    #[error("t values must lie in (0, 1], got {0}")]
    BadT(f64),
    #[error("face {0} lies entirely inside the edge collar")]
    Resolution(usize),
    #[error("finite-difference slope {slope} outside [{lo}, {hi}]:\n{table}")]
    Slope {
        slope: f64,
        lo: f64,
        hi: f64,
        table: String,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// ℂ∇u·∇v div𝒰 − ℂ(∇u D𝒰)·∇v − ℂ∇u·(∇v D𝒰).
pub fn integrand_symmetric(c: &Lame, gu: &Mat3, gv: &Mat3, d: &Mat3) -> f64 {
    let su = c.apply(gu);
    let div = d.trace();
    div * su.component_mul(gv).sum()
        - c.apply(&(gu * d)).component_mul(gv).sum()
        - su.component_mul(&(gv * d)).sum()
}

/// {(ℂ∇u)(div𝒰 I − D𝒰ᵀ) − ℂ(∇u D𝒰)}·∇v.
pub fn integrand_pullback(c: &Lame, gu: &Mat3, gv: &Mat3, d: &Mat3) -> f64 {
    let su = c.apply(gu);
    let a = su * (Mat3::identity() * d.trace() - d.transpose()) - c.apply(&(gu * d));
    a.component_mul(gv).sum()
}

/// One reference mesh, one material pair, one patch Σ and a nodal
/// deformation field vanishing on ∂Ω.
#[derive(Debug, Clone)]
pub struct ShapeProblem {
    pub mesh: Mesh,
    pub sigma: Sigma,
    pub materials: BiphaseMaterial,
    pub kind: SolverKind,
    /// 𝒰 at the mesh nodes, flattened as 3·node + component.
    pub field: Vec<f64>,
}

/// Solutions with traces f and g on one mesh.
#[derive(Debug, Clone)]
pub struct SolvedPair {
    pub fem: Fem,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
    pub residual: f64,
}

impl ShapeProblem {
    pub fn new(
        mesh: Mesh,
        sigma: Sigma,
        materials: BiphaseMaterial,
        kind: SolverKind,
        field: impl Fn(&Vec3) -> Vec3,
    ) -> Result<Self, ShapeError> {
        let values = crate::forward::interpolate(&mesh, field);
        for (i, &b) in mesh.boundary_nodes().iter().enumerate() {
            if b && values[3 * i..3 * i + 3].iter().any(|&x| x != 0.0) {
                return Err(ShapeError::FieldOnBoundary(i));
            }
        }
        Ok(Self {
            mesh,
            sigma,
            materials,
            kind,
            field: values,
        })
    }

    /// Same setup with 𝒰 replaced.
    pub fn with_field(&self, field: Vec<f64>) -> Self {
        Self {
            field,
            ..self.clone()
        }
    }

    pub fn with_materials(&self, materials: BiphaseMaterial) -> Self {
        Self {
            materials,
            ..self.clone()
        }
    }

    pub fn field_at(&self, node: usize) -> Vec3 {
        Vec3::new(
            self.field[3 * node],
            self.field[3 * node + 1],
            self.field[3 * node + 2],
        )
    }

    /// Φ_t applied to the reference mesh.
    pub fn moved(&self, t: f64) -> Result<Mesh, ShapeError> {
        let mut m = self.mesh.clone();
        for (i, x) in m.nodes.iter_mut().enumerate() {
            *x += self.field_at(i) * t;
        }
        m.check()
            .map_err(|source| ShapeError::Inverted { t, source })?;
        Ok(m)
    }

    pub fn fem(&self, mesh: &Mesh) -> Result<Fem, ShapeError> {
        Ok(Fem::biphase(
            mesh,
            self.materials.interior.lame(),
            self.materials.exterior.lame(),
        )?)
    }

    fn check_trace(&self, f: &[f64]) -> Result<(), ShapeError> {
        if f.len() != self.sigma.dofs() {
            return Err(ShapeError::Trace {
                expected: self.sigma.dofs(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// u_t and v_t with traces f, g on Σ and zero on the rest of ∂Ω.
    pub fn solve_at(&self, t: f64, f: &[f64], g: &[f64]) -> Result<SolvedPair, ShapeError> {
        self.check_trace(f)?;
        self.check_trace(g)?;
        let mesh = if t == 0.0 {
            self.mesh.clone()
        } else {
            self.moved(t)?
        };
        let fem = self.fem(&mesh)?;
        let solver = DirichletSolver::new(&fem, &mesh.boundary_nodes(), self.kind)?;
        let n = mesh.nodes.len();
        let gs = vec![self.sigma.lift(n, f), self.sigma.lift(n, g)];
        let mut sols = solver.solve_many(&fem, &gs, None)?;
        let (v, rv) = sols.pop().expect("two solutions");
        let (u, ru) = sols.pop().expect("two solutions");
        let value = fem.pairing(&u, &v);
        Ok(SolvedPair {
            fem,
            u,
            v,
            value,
            residual: ru.residual.max(rv.residual),
        })
    }

    /// F(t, f, g).
    pub fn f_value(&self, t: f64, f: &[f64], g: &[f64]) -> Result<f64, ShapeError> {
        Ok(self.solve_at(t, f, g)?.value)
    }

    /// D𝒰_h per tet on the mesh underlying `fem`.
    pub fn field_gradients(&self, fem: &Fem) -> Vec<Mat3> {
        (0..fem.tets.len())
            .map(|t| fem.gradient(t, &self.field))
            .collect()
    }

    /// ȧ(u, v) on the mesh of `pair`.
    pub fn derivative_form(&self, fem: &Fem, u: &[f64], v: &[f64]) -> f64 {
        let d = self.field_gradients(fem);
        (0..fem.tets.len())
            .map(|t| {
                if d[t] == Mat3::zeros() {
                    return 0.0;
                }
                fem.vols[t]
                    * integrand_symmetric(
                        &fem.lame[t],
                        &fem.gradient(t, u),
                        &fem.gradient(t, v),
                        &d[t],
                    )
            })
            .sum()
    }

    /// Distributed F′(t₀, f, g).
    pub fn f_prime_distributed(&self, t0: f64, f: &[f64], g: &[f64]) -> Result<f64, ShapeError> {
        let pair = self.solve_at(t0, f, g)?;
        Ok(self.derivative_form(&pair.fem, &pair.u, &pair.v))
    }

    /// Interface form −∫_{∂D₀}(𝒰·n)𝕄∇̂uᵉ·∇̂vᵉ split into the part away from
    /// the edges and the collar within `edge_margin` of an edge of `p0`.
    pub fn f_prime_boundary(
        &self,
        p0: &Polyhedron,
        f: &[f64],
        g: &[f64],
        edge_margin: f64,
    ) -> Result<BoundaryDerivative, ShapeError> {
        let pair = self.solve_at(0.0, f, g)?;
        self.boundary_form(p0, &pair, edge_margin)
    }

    pub fn boundary_form(
        &self,
        p0: &Polyhedron,
        pair: &SolvedPair,
        edge_margin: f64,
    ) -> Result<BoundaryDerivative, ShapeError> {
        let verts = p0.vertices();
        let segs: Vec<(Vec3, Vec3)> = p0
            .edges()
            .iter()
            .map(|e| (verts[e.v[0]], verts[e.v[1]]))
            .collect();
        let edge_dist = |x: &Vec3| {
            segs.iter()
                .map(|(a, b)| segment_distance(x, x, a, b))
                .fold(f64::INFINITY, f64::min)
        };
        let mut out = BoundaryDerivative::default();
        let mut face_hits = vec![0usize; p0.faces().len()];
        for fct in self.mesh.interface_facets(&self.mesh.inside) {
            let pts = fct.nodes.map(|i| self.mesh.nodes[i]);
            let un = fct
                .nodes
                .iter()
                .map(|&i| self.field_at(i))
                .sum::<Vec3>()
                .dot(&fct.normal)
                / 3.0;
            let gu = pair.fem.gradient(fct.outer, &pair.u);
            let gv = pair.fem.gradient(fct.outer, &pair.v);
            let sym = |a: &Mat3| (a + a.transpose()) * 0.5;
            let m = build_m(&self.materials, &fct.normal);
            let val = -un * m.apply(&sym(&gu)).component_mul(&sym(&gv)).sum() * fct.area;
            let near = pts.iter().map(&edge_dist).fold(f64::INFINITY, f64::min) < edge_margin;
            if near {
                out.collar += val;
                out.collar_abs += val.abs();
                out.collar_facets += 1;
            } else {
                out.value += val;
                out.facets += 1;
                let c = pts.iter().sum::<Vec3>() / 3.0;
                if let Some(face) = (0..p0.faces().len()).min_by(|&a, &b| {
                    let (na, ca) = p0.plane(a);
                    let (nb, cb) = p0.plane(b);
                    (na.dot(&c) - ca).abs().total_cmp(&(nb.dot(&c) - cb).abs())
                }) {
                    face_hits[face] += 1;
                }
            }
        }
        if let Some(face) = face_hits.iter().position(|&k| k == 0) {
            return Err(ShapeError::Resolution(face));
        }
        Ok(out)
    }

    /// Right-hand side −ȧ(u₀, ψ) over the free dofs of `solver`.
    fn material_rhs(&self, fem: &Fem, u0: &[f64], solver: &DirichletSolver) -> Vec<f64> {
        let d = self.field_gradients(fem);
        let mut rhs = vec![0.0; solver.n_free()];
        for (t, tet) in fem.tets.iter().enumerate() {
            if d[t] == Mat3::zeros() {
                continue;
            }
            let c = &fem.lame[t];
            let gu = fem.gradient(t, u0);
            let s1 = c.apply(&gu) * d[t].trace() - c.apply(&(gu * d[t]));
            let s2 = c.apply(&gu);
            for (a, &node) in tet.iter().enumerate() {
                let ga = fem.grads[t][a];
                let r = (s1 * ga - s2 * (d[t].transpose() * ga)) * fem.vols[t];
                for j in 0..3 {
                    let k = solver.index[3 * node + j];
                    if k != usize::MAX {
                        rhs[k] -= r[j];
                    }
                }
            }
        }
        rhs
    }

    /// u̇₀ for the trace f: zero-trace solve with right-hand side −ȧ(u₀, ·).
    pub fn material_derivative(&self, f: &[f64]) -> Result<DiscreteField, ShapeError> {
        self.check_trace(f)?;
        let fem = self.fem(&self.mesh)?;
        let solver = DirichletSolver::new(&fem, &self.mesh.boundary_nodes(), self.kind)?;
        let (u0, _) = solver.solve(&fem, &self.sigma.lift(self.mesh.nodes.len(), f), None)?;
        let rhs = self.material_rhs(&fem, &u0, &solver);
        let (x, report) = solver.solve_free(&[rhs])?.pop().expect("one solution");
        let mut values = vec![0.0; fem.dofs()];
        for (i, &d) in solver.free.iter().enumerate() {
            values[d] = x[i];
        }
        let energy = fem.energy(&values);
        Ok(DiscreteField {
            values,
            energy,
            report,
        })
    }

    /// Energy-norm distance between (u_t∘Φ_t − u₀)/t and u̇₀ for each t.
    pub fn material_quotient_errors(
        &self,
        f: &[f64],
        ts: &[f64],
    ) -> Result<Vec<(f64, f64)>, ShapeError> {
        let udot = self.material_derivative(f)?;
        let u0 = self.solve_at(0.0, f, f)?;
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            let ut = self.solve_at(t, f, f)?;
            let e: Vec<f64> = (0..udot.values.len())
                .map(|i| (ut.u[i] - u0.u[i]) / t - udot.values[i])
                .collect();
            out.push((t, u0.fem.energy(&e).max(0.0).sqrt()));
        }
        Ok(out)
    }

    /// Residuals R(t) = |F(t) − F(0) − tF′(0)| and local log-log slopes.
    pub fn fd_validate(&self, f: &[f64], g: &[f64], ts: &[f64]) -> Result<FdTable, ShapeError> {
        for &t in ts {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ShapeError::BadT(t));
            }
        }
        let p0 = self.solve_at(0.0, f, g)?;
        let d = self.derivative_form(&p0.fem, &p0.u, &p0.v);
        let mut rows = Vec::with_capacity(ts.len());
        for &t in ts {
            let ft = self.f_value(t, f, g)?;
            rows.push(FdRow {
                t,
                f: ft,
                residual: (ft - p0.value - t * d).abs(),
                slope: None,
            });
        }
        rows.sort_by(|a, b| b.t.total_cmp(&a.t));
        for k in 1..rows.len() {
            let s =
                (rows[k - 1].residual / rows[k].residual).ln() / (rows[k - 1].t / rows[k].t).ln();
            rows[k].slope = Some(s);
        }
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.t.ln(), r.residual.ln())).unzip();
        Ok(FdTable {
            f0: p0.value,
            derivative: d,
            slope: fit_slope(&x, &y),
            rows,
        })
    }

    /// Every quantity of one (f, g) evaluation on the reference mesh.
    pub fn bundle(
        &self,
        p0: &Polyhedron,
        f: &[f64],
        g: &[f64],
        ts: &[f64],
        edge_margin: f64,
    ) -> Result<DerivativeBundle, ShapeError> {
        let pair = self.solve_at(0.0, f, g)?;
        let distributed = self.derivative_form(&pair.fem, &pair.u, &pair.v);
        let boundary = self.boundary_form(p0, &pair, edge_margin)?;
        let fd = self.fd_validate(f, g, ts)?;
        let material = self.material_derivative(f)?;
        Ok(DerivativeBundle {
            f0: pair.value,
            distributed,
            boundary,
            edge_margin,
            material_energy: material.energy,
            material_derivative: material.values,
            fd,
        })
    }
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoundaryDerivative {
    /// Integral over facets at distance ≥ edge_margin from every edge.
    pub value: f64,
    /// The same integrand over the collar.
    pub collar: f64,
    pub collar_abs: f64,
    pub facets: usize,
    pub collar_facets: usize,
}

impl BoundaryDerivative {
    /// Agreement test against the distributed form: within `rel` of it or
    /// within the size of the collar contribution.
    pub fn agrees_with(&self, distributed: f64, rel: f64) -> bool {
        (self.value - distributed).abs() <= (rel * distributed.abs()).max(self.collar_abs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdRow {
    pub t: f64,
    pub f: f64,
    pub residual: f64,
    /// Slope against the previous (larger) t.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdTable {
    pub f0: f64,
    pub derivative: f64,
    /// Fitted log-log slope of R(t) over all rows.
    pub slope: f64,
    pub rows: Vec<FdRow>,
}

impl FdTable {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "t,F,R,slope")?;
        for r in &self.rows {
            let s = r.slope.map(|s| format!("{s:.6}")).unwrap_or_default();
            writeln!(w, "{:e},{:.15e},{:e},{}", r.t, r.f, r.residual, s)?;
        }
        Ok(())
    }

    pub fn check(&self, lo: f64, hi: f64) -> Result<(), ShapeError> {
        if self.slope >= lo && self.slope <= hi {
            return Ok(());
        }
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        Err(ShapeError::Slope {
            slope: self.slope,
            lo,
            hi,
            table: String::from_utf8_lossy(&buf).into_owned(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBundle {
    pub f0: f64,
    pub distributed: f64,
    pub boundary: BoundaryDerivative,
    pub edge_margin: f64,
    pub material_energy: f64,
    pub material_derivative: Vec<f64>,
    pub fd: FdTable,
}

impl DerivativeBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }
}

/// F(1) − F(0) against ⟨(Λ_{D₁} − Λ_{D₀})f, g⟩ from two DtN assemblies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointCheck {
    pub difference: f64,
    pub pairing: f64,
    pub relative_error: f64,
}

pub fn endpoint_check(
    problem: &ShapeProblem,
    f: &[f64],
    g: &[f64],
) -> Result<EndpointCheck, ShapeError> {
    let difference = problem.f_value(1.0, f, g)? - problem.f_value(0.0, f, g)?;
    let l0 = dtn_assemble(
        &problem.mesh,
        &problem.fem(&problem.mesh)?,
        &problem.sigma,
        problem.kind,
    )?;
    let m1 = problem.moved(1.0)?;
    let l1 = dtn_assemble(&m1, &problem.fem(&m1)?, &problem.sigma, problem.kind)?;
    let pairing = l1.pair(f, g) - l0.pair(f, g);
    Ok(EndpointCheck {
        difference,
        pairing,
        relative_error: (difference - pairing).abs() / pairing.abs().max(f64::MIN_POSITIVE),
    })
}

/// Pointwise comparison of div b against the three-term integrand for
/// Kelvin fields and an analytic 𝒰 in a homogeneous medium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivIdentityReport {
    pub samples: usize,
    /// Largest |div b − integrand| over the sum of the absolute terms.
    pub max_relative: f64,
    pub max_integrand: f64,
}

/// A Kelvin field Γ(·, y)l.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelvinSource {
    pub pole: Vec3,
    pub direction: Vec3,
}

impl KelvinSource {
    pub fn gradient(&self, x: &Vec3, c: &IsotropicElastic) -> Result<Mat3, KernelError> {
        Ok(kelvin(x, &self.pole, c)?.displacement_gradient(&self.direction))
    }
}

pub fn div_identity_check(
    c: &IsotropicElastic,
    field: &dyn Fn(&Vec3) -> Vec3,
    field_gradient: &dyn Fn(&Vec3) -> Mat3,
    u: &KelvinSource,
    v: &KelvinSource,
    points: &[Vec3],
    step: f64,
) -> Result<DivIdentityReport, ShapeError> {
    let lame = c.lame();
    let b = |x: &Vec3| -> Result<Vec3, KernelError> {
        Ok(bfield(
            &lame,
            &u.gradient(x, c)?,
            &v.gradient(x, c)?,
            &field(x),
        ))
    };
    let mut report = DivIdentityReport {
        samples: points.len(),
        max_relative: 0.0,
        max_integrand: 0.0,
    };
    for x in points {
        let mut div = 0.0;
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = step;
            div += (b(&(x + e))?[j] - b(&(x - e))?[j]) / (2.0 * step);
        }
        let (gu, gv, d) = (u.gradient(x, c)?, v.gradient(x, c)?, field_gradient(x));
        let lhs = integrand_symmetric(&lame, &gu, &gv, &d);
        let su = lame.apply(&gu);
        let scale = (d.trace() * su.component_mul(&gv).sum()).abs()
            + lame.apply(&(gu * d)).component_mul(&gv).sum().abs()
            + su.component_mul(&(gv * d)).sum().abs();
        let rel = if scale > 0.0 {
            (div - lhs).abs() / scale
        } else {
            (div - lhs).abs()
        };
        report.max_relative = report.max_relative.max(rel);
        report.max_integrand = report.max_integrand.max(lhs.abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::random_mat3;
    use crate::forward::BoxFace;
    use crate::geometry::BoxDomain;
    use crate::homotopy::{build_field, pushed_cube, HomotopyOptions};
    use crate::polyhedra::AdmissibilityParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iso(l: f64, m: f64) -> IsotropicElastic {
        IsotropicElastic::new(l, m).unwrap()
    }

    fn problem(h: f64, interior: IsotropicElastic) -> (ShapeProblem, Polyhedron) {
        let omega = BoxDomain::centered(Vec3::zeros(), 2.5);
        let p0 = Polyhedron::cube(Vec3::zeros(), 1.0);
        let p1 = pushed_cube(Vec3::zeros(), 1.0, 0.01);
        let mesh = Mesh::inclusion(&omega, &p0, h).unwrap();
        let sigma = Sigma::on_face(&mesh, &omega, BoxFace::TOP).unwrap();
        let field = build_field(
            &p0,
            &p1,
            &AdmissibilityParams::default(),
            &HomotopyOptions::default(),
        )
        .unwrap();
        let mats = BiphaseMaterial::detect(interior, iso(1.0, 1.0));
        let sp = ShapeProblem::new(mesh, sigma, mats, SolverKind::Cholesky, |x| {
            field.displacement(x)
        })
        .unwrap();
        (sp, p0)
    }

    fn bump(x: &Vec3) -> Vec3 {
        let b = (1.25 - x.x.abs()) * (1.25 - x.y.abs());
        Vec3::new(0.0, 0.1 * b, -b)
    }

    fn shear(x: &Vec3) -> Vec3 {
        let b = (1.25 - x.x.abs()) * (1.25 - x.y.abs());
        Vec3::new(b, 0.2 * b, 0.0)
    }

    #[test]
    fn integrand_forms_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Lame::new(1.3, 0.8);
        for _ in 0..200 {
            let (gu, gv, d) = (
                random_mat3(&mut rng),
                random_mat3(&mut rng),
                random_mat3(&mut rng),
            );
            let a = integrand_symmetric(&c, &gu, &gv, &d);
            let b = integrand_pullback(&c, &gu, &gv, &d);
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn derivative_properties() {
        let (sp, _) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let g = sp.sigma.sample(&sp.mesh, shear);
        // symmetry and positivity
        let fg = sp.f_value(0.3, &f, &g).unwrap();
        let gf = sp.f_value(0.3, &g, &f).unwrap();
        assert_relative_eq!(fg, gf, max_relative = 1e-9);
        assert!(sp.f_value(0.3, &f, &f).unwrap() > 0.0);
        // bilinearity
        let d1 = sp.f_prime_distributed(0.0, &f, &g).unwrap();
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let d2 = sp.f_prime_distributed(0.0, &f2, &g).unwrap();
        assert_relative_eq!(d2, 2.0 * d1, max_relative = 1e-9);
        // zero field
        let z = sp.with_field(vec![0.0; sp.field.len()]);
        assert_eq!(z.f_prime_distributed(0.0, &f, &g).unwrap(), 0.0);
        let row = z.fd_validate(&f, &g, &[0.1]).unwrap().rows[0];
        assert!(row.residual <= 1e-12 * row.f.abs());
    }

    #[test]
    fn first_value_is_dtn_pairing() {
        let (sp, _) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let g = sp.sigma.sample(&sp.mesh, shear);
        let l0 = dtn_assemble(&sp.mesh, &sp.fem(&sp.mesh).unwrap(), &sp.sigma, sp.kind).unwrap();
        assert_relative_eq!(
            sp.f_value(0.0, &f, &g).unwrap(),
            l0.pair(&f, &g),
            max_relative = 1e-9
        );
    }

    #[test]
    fn residual_is_quadratic() {
        let (sp, _) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let table = sp.fd_validate(&f, &f, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        table.check(1.7, 2.3).unwrap();
        assert!(table.derivative > 0.0);
    }

    #[test]
    fn homogeneous_moduli_are_constant_in_t() {
        let (sp, _) = problem(0.25, iso(1.0, 1.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let f0 = sp.f_value(0.0, &f, &f).unwrap();
        let f1 = sp.f_value(1.0, &f, &f).unwrap();
        // only the mesh moves; the change is a discretization effect
        assert!((f1 - f0).abs() < 1e-3 * f0);
        let b = sp
            .f_prime_boundary(&Polyhedron::cube(Vec3::zeros(), 1.0), &f, &f, 0.0625)
            .unwrap();
        assert_eq!(b.value, 0.0);
        assert_eq!(b.collar, 0.0);
    }

    #[test]
    fn boundary_form_has_one_sign() {
        let (sp, p0) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let b = sp.f_prime_boundary(&p0, &f, &f, 0.0625).unwrap();
        assert!(b.value > 0.0 && b.collar >= 0.0);
        let soft = sp.with_materials(BiphaseMaterial::detect(iso(0.5, 0.5), iso(1.0, 1.0)));
        let b = soft.f_prime_boundary(&p0, &f, &f, 0.0625).unwrap();
        assert!(b.value < 0.0 && b.collar <= 0.0);
        assert!(matches!(
            sp.f_prime_boundary(&p0, &f, &f, 0.6),
            Err(ShapeError::Resolution(_))
        ));
    }

    #[test]
    fn material_derivative_is_linear_and_matches_quotients() {
        let (sp, _) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let a = sp.material_derivative(&f).unwrap();
        let half = sp.with_field(sp.field.iter().map(|x| 0.5 * x).collect());
        let b = half.material_derivative(&f).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - 2.0 * y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
        let zero = sp
            .with_field(vec![0.0; sp.field.len()])
            .material_derivative(&f)
            .unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));
        let errs = sp.material_quotient_errors(&f, &[0.2, 0.1, 0.05]).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = errs.iter().map(|(t, e)| (t.ln(), e.ln())).unzip();
        let s = fit_slope(&x, &y);
        assert!((s - 1.0).abs() < 0.2, "slope {s}");
    }

    #[test]
    fn endpoint_difference_matches_dtn() {
        let (sp, _) = problem(0.25, iso(2.0, 2.0));
        let f = sp.sigma.sample(&sp.mesh, bump);
        let g = sp.sigma.sample(&sp.mesh, shear);
        let e = endpoint_check(&sp, &f, &g).unwrap();
        assert!(e.relative_error <= 1e-6, "{e:?}");
    }

    #[test]
    fn field_must_vanish_on_the_box() {
        let omega = BoxDomain::centered(Vec3::zeros(), 2.5);
        let mesh = Mesh::inclusion(&omega, &Polyhedron::cube(Vec3::zeros(), 1.0), 0.5).unwrap();
        let sigma = Sigma::on_face(&mesh, &omega, BoxFace::TOP).unwrap();
        let mats = BiphaseMaterial::detect(iso(2.0, 2.0), iso(1.0, 1.0));
        let r = ShapeProblem::new(mesh, sigma, mats, SolverKind::Cholesky, |_| Vec3::x());
        assert!(matches!(r, Err(ShapeError::FieldOnBoundary(_))));
    }

    fn sources() -> (KelvinSource, KelvinSource) {
        (
            KelvinSource {
                pole: Vec3::new(2.0, 0.3, -0.1),
                direction: Vec3::new(0.2, 0.9, 0.4).normalize(),
            },
            KelvinSource {
                pole: Vec3::new(-0.4, 2.2, 0.5),
                direction: Vec3::new(1.0, -0.3, 0.2).normalize(),
            },
        )
    }

    #[test]
    fn div_identity_affine_field() {
        let c = iso(1.4, 0.9);
        let a = Mat3::new(0.1, -0.3, 0.2, 0.05, 0.4, -0.1, 0.3, 0.0, -0.2);
        let w = Vec3::new(0.2, 0.1, -0.3);
        let (u, v) = sources();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::from_fn(|_, _| rand::Rng::random_range(&mut rng, -0.5..0.5)))
            .collect();
        let r = div_identity_check(&c, &|x| a * x + w, &|_| a, &u, &v, &pts, 1e-4).unwrap();
        assert!(r.max_relative <= 1e-5, "{r:?}");
        // constant field: both sides vanish
        let r0 = div_identity_check(&c, &|_| w, &|_| Mat3::zeros(), &u, &v, &pts, 1e-4).unwrap();
        assert!(r0.max_integrand == 0.0);
    }

    #[test]
    fn div_identity_is_homogeneous() {
        let (u, v) = sources();
        let x = Vec3::new(0.1, -0.2, 0.3);
        let a = Mat3::new(0.1, -0.3, 0.2, 0.05, 0.4, -0.1, 0.3, 0.0, -0.2);
        let c = iso(1.4, 0.9);
        let c2 = iso(2.8, 1.8);
        // Kelvin gradients scale like 1/ℂ; fix them and double the tensor
        let (gu, gv) = (u.gradient(&x, &c).unwrap(), v.gradient(&x, &c).unwrap());
        let one = integrand_symmetric(&c.lame(), &gu, &gv, &a);
        let two = integrand_symmetric(&c2.lame(), &gu, &gv, &a);
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn div_identity_trig_field(k in 0.5f64..2.0, phase in 0.0f64..3.0) {
            let c = iso(1.0, 1.0);
            let (u, v) = sources();
            let fld = move |x: &Vec3| Vec3::new((k * x.y + phase).sin(), (k * x.z).cos() * 0.5, x.x * x.y * 0.3);
            let grd = move |x: &Vec3| Mat3::new(
                0.0, k * (k * x.y + phase).cos(), 0.0,
                0.0, 0.0, -0.5 * k * (k * x.z).sin(),
                0.3 * x.y, 0.3 * x.x, 0.0,
            );
            let pts = [Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.4, 0.1, 0.2)];
            let r = div_identity_check(&c, &fld, &grd, &u, &v, &pts, 1e-4).unwrap();
            prop_assert!(r.max_relative <= 1e-5);
        }
    }
}
