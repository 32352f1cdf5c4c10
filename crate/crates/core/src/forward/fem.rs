//! Piecewise-linear vector finite elements for the Lamé system: assembly,
//! Dirichlet solves by sparse Cholesky or block-Jacobi conjugate gradients.

use super::mesh::Mesh;
use crate::elasticity::Lame;
use crate::geometry::{Mat3, Vec3};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("stiffness matrix is not positive definite on the free unknowns")]
    Indefinite,
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("material with μ = {mu}, 2μ+3λ = {bulk} is not strongly convex")]
    Material { mu: f64, bulk: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    fn position(&self, r: usize, c: usize) -> usize {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        self.indptr[r] + row.binary_search(&c).expect("entry in pattern")
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        row.binary_search(&c)
            .map_or(0.0, |k| self.data[self.indptr[r] + k])
    }

    /// Rows and columns restricted to `keep`, renumbered by `index`.
    pub fn restrict(&self, keep: &[usize], index: &[usize]) -> Csr {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for &r in keep {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = index[self.indices[k]];
                if c != usize::MAX {
                    indices.push(c);
                    data.push(self.data[k]);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            n: keep.len(),
            indptr,
            indices,
            data,
        }
    }

    pub fn triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        let mut t = Vec::with_capacity(self.data.len());
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push(Triplet::new(r, self.indices[k], self.data[k]));
            }
        }
        t
    }
}

/// Gradients of the barycentric coordinates of a tet and its volume.
pub fn shape_gradients(p: &[Vec3; 4]) -> ([Vec3; 4], f64) {
    let j = Mat3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let vol = j.determinant() / 6.0;
    let inv = j.try_inverse().unwrap_or_else(Mat3::zeros);
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    ([-(g1 + g2 + g3), g1, g2, g3], vol)
}

/// 12×12 element stiffness, block (a, b) entry (i, j) coupling uₐᵢ with u_bⱼ.
pub fn element_stiffness(g: &[Vec3; 4], vol: f64, c: &Lame) -> [[f64; 12]; 12] {
    let mut k = [[0.0; 12]; 12];
    for a in 0..4 {
        for b in 0..4 {
            let gg = g[a].dot(&g[b]);
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = c.mu * g[b][i] * g[a][j] + c.lambda * g[a][i] * g[b][j];
                    if i == j {
                        v += c.mu * gg;
                    }
                    k[3 * a + i][3 * b + j] = vol * v;
                }
            }
        }
    }
    k
}

/// Assembled system for one mesh and one coefficient per tet.
#[derive(Debug, Clone)]
pub struct Fem {
    pub lame: Vec<Lame>,
    pub grads: Vec<[Vec3; 4]>,
    pub vols: Vec<f64>,
    pub tets: Vec<[usize; 4]>,
    pub k: Csr,
    pub n_nodes: usize,
}

impl Fem {
    pub fn new(mesh: &Mesh, lame: Vec<Lame>) -> Result<Fem, SolveError> {
        for c in &lame {
            if !(c.mu > 0.0 && 2.0 * c.mu + 3.0 * c.lambda > 0.0) {
                return Err(SolveError::Material {
                    mu: c.mu,
                    bulk: 2.0 * c.mu + 3.0 * c.lambda,
                });
            }
        }
        let nn = mesh.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nn];
        for t in &mesh.tets {
            for &a in t {
                adj[a].extend_from_slice(t);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut indptr = Vec::with_capacity(3 * nn + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for a in &adj {
            for _ in 0..3 {
                for &b in a {
                    indices.extend([3 * b, 3 * b + 1, 3 * b + 2]);
                }
                indptr.push(indices.len());
            }
        }
        let mut k = Csr {
            n: 3 * nn,
            data: vec![0.0; indices.len()],
            indptr,
            indices,
        };
        let mut grads = Vec::with_capacity(mesh.tets.len());
        let mut vols = Vec::with_capacity(mesh.tets.len());
        for (t, tet) in mesh.tets.iter().enumerate() {
            let (g, v) = shape_gradients(&mesh.tet_points(t));
            let ke = element_stiffness(&g, v, &lame[t]);
            for a in 0..4 {
                for b in 0..4 {
                    for i in 0..3 {
                        let r = 3 * tet[a] + i;
                        let p = k.position(r, 3 * tet[b]);
                        for j in 0..3 {
                            k.data[p + j] += ke[3 * a + i][3 * b + j];
                        }
                    }
                }
            }
            grads.push(g);
            vols.push(v);
        }
        Ok(Fem {
            lame,
            grads,
            vols,
            tets: mesh.tets.clone(),
            k,
            n_nodes: nn,
        })
    }

    /// Two-phase coefficients from the mesh inclusion tag.
    pub fn biphase(mesh: &Mesh, interior: Lame, exterior: Lame) -> Result<Fem, SolveError> {
        let lame = mesh
            .inside
            .iter()
            .map(|&i| if i { interior } else { exterior })
            .collect();
        Fem::new(mesh, lame)
    }

    pub fn dofs(&self) -> usize {
        3 * self.n_nodes
    }

    /// ∇u on tet t, entry (i, j) = ∂ⱼuᵢ.
    pub fn gradient(&self, t: usize, u: &[f64]) -> Mat3 {
        let mut g = Mat3::zeros();
        for (a, &n) in self.tets[t].iter().enumerate() {
            let ua = Vec3::new(u[3 * n], u[3 * n + 1], u[3 * n + 2]);
            g += ua * self.grads[t][a].transpose();
        }
        g
    }

    /// uᵀKv.
    pub fn pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        self.k.mul(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.pairing(u, u)
    }
}

/// How the free block is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Cholesky,
    Pcg { tol: f64, max_iter: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Cholesky
    }
}

enum Factor {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Pcg {
        kii: Csr,
        blocks: Vec<Mat3>,
        tol: f64,
        max_iter: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖K_II u_I − b_I‖ / ‖b_I‖.
    pub residual: f64,
}

/// Dirichlet problem with all nodes flagged in `fixed` constrained.
pub struct DirichletSolver {
    /// dof → free index or `usize::MAX`.
    pub index: Vec<usize>,
    pub free: Vec<usize>,
    kii: Csr,
    factor: Factor,
}

impl DirichletSolver {
    pub fn new(fem: &Fem, fixed: &[bool], kind: SolverKind) -> Result<Self, SolveError> {
        let mut index = vec![usize::MAX; fem.dofs()];
        let mut free = Vec::new();
        for n in 0..fem.n_nodes {
            if !fixed[n] {
                for c in 0..3 {
                    index[3 * n + c] = free.len();
                    free.push(3 * n + c);
                }
            }
        }
        let kii = fem.k.restrict(&free, &index);
        let factor = match kind {
            SolverKind::Cholesky => {
                let m = SparseColMat::<usize, f64>::try_new_from_triplets(
                    kii.n,
                    kii.n,
                    &kii.triplets(),
                )
                .map_err(|_| SolveError::Indefinite)?;
                Factor::Cholesky(
                    m.sp_cholesky(Side::Lower)
                        .map_err(|_| SolveError::Indefinite)?,
                )
            }
            SolverKind::Pcg { tol, max_iter } => {
                let nb = kii.n / 3;
                let mut blocks = Vec::with_capacity(nb);
                for b in 0..nb {
                    let m = Mat3::from_fn(|i, j| kii.get(3 * b + i, 3 * b + j));
                    blocks.push(m.try_inverse().ok_or(SolveError::Indefinite)?);
                }
                Factor::Pcg {
                    kii: kii.clone(),
                    blocks,
                    tol,
                    max_iter,
                }
            }
        };
        Ok(Self {
            index,
            free,
            kii,
            factor,
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Solves K u = f on free dofs with u = g on fixed dofs. `g` and `f` are
    /// full-length; entries of `g` at free dofs are ignored.
    pub fn solve(
        &self,
        fem: &Fem,
        g: &[f64],
        f: Option<&[f64]>,
    ) -> Result<(Vec<f64>, SolveReport), SolveError> {
        let mut out =
            self.solve_many(fem, &[g.to_vec()], f.map(|f| vec![f.to_vec()]).as_deref())?;
        Ok(out.pop().expect("one solution"))
    }

    pub fn solve_many(
        &self,
        fem: &Fem,
        gs: &[Vec<f64>],
        fs: Option<&[Vec<f64>]>,
    ) -> Result<Vec<(Vec<f64>, SolveReport)>, SolveError> {
        let n = fem.dofs();
        let mut rhs = Vec::with_capacity(gs.len());
        let mut bases = Vec::with_capacity(gs.len());
        for (col, g) in gs.iter().enumerate() {
            if g.len() != n {
                return Err(SolveError::Dimension {
                    expected: n,
                    got: g.len(),
                });
            }
            let mut base = g.clone();
            for &d in &self.free {
                base[d] = 0.0;
            }
            let kg = fem.k.mul(&base);
            let mut b: Vec<f64> = self.free.iter().map(|&d| -kg[d]).collect();
            if let Some(fs) = fs {
                for (i, &d) in self.free.iter().enumerate() {
                    b[i] += fs[col][d];
                }
            }
            rhs.push(b);
            bases.push(base);
        }
        let sols = self.solve_free(&rhs)?;
        Ok(sols
            .into_iter()
            .zip(bases)
            .map(|((x, rep), mut base)| {
                for (i, &d) in self.free.iter().enumerate() {
                    base[d] = x[i];
                }
                (base, rep)
            })
            .collect())
    }

    /// Solves K_II x = b for each right-hand side.
    pub fn solve_free(&self, rhs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, SolveReport)>, SolveError> {
        let m = self.kii.n;
        match &self.factor {
            Factor::Cholesky(llt) => {
                let mut out = Vec::with_capacity(rhs.len());
                for chunk in rhs.chunks(128) {
                    let mut b = Mat::<f64>::zeros(m, chunk.len());
                    for (c, r) in chunk.iter().enumerate() {
                        for i in 0..m {
                            b[(i, c)] = r[i];
                        }
                    }
                    llt.solve_in_place(b.as_mut());
                    for (c, r) in chunk.iter().enumerate() {
                        let x: Vec<f64> = (0..m).map(|i| b[(i, c)]).collect();
                        let residual = relative_residual(&self.kii, &x, r);
                        out.push((
                            x,
                            SolveReport {
                                iterations: 1,
                                residual,
                            },
                        ));
                    }
                }
                Ok(out)
            }
            Factor::Pcg {
                kii,
                blocks,
                tol,
                max_iter,
            } => rhs
                .iter()
                .map(|b| pcg(kii, blocks, b, *tol, *max_iter))
                .collect(),
        }
    }
}

fn relative_residual(k: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let kx = k.mul(x);
    let num: f64 = kx
        .iter()
        .zip(b)
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn apply_blocks(blocks: &[Mat3], r: &[f64], z: &mut [f64]) {
    for (b, m) in blocks.iter().enumerate() {
        let v = m * Vec3::new(r[3 * b], r[3 * b + 1], r[3 * b + 2]);
        z[3 * b..3 * b + 3].copy_from_slice(v.as_slice());
    }
}

/// Conjugate gradients preconditioned by the inverse 3×3 diagonal blocks.
pub fn pcg(
    k: &Csr,
    blocks: &[Mat3],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = k.n;
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let bn = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((x, SolveReport::default()));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_blocks(blocks, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iter {
        k.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(SolveError::Indefinite);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = dot(&r, &r).sqrt() / bn;
        if res <= tol {
            let residual = relative_residual(k, &x, b);
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    residual,
                },
            ));
        }
        apply_blocks(blocks, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual: dot(&r, &r).sqrt() / bn,
    })
}

/// Nodal vector field as a flat dof vector.
pub fn interpolate(mesh: &Mesh, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
    mesh.nodes
        .iter()
        .flat_map(|x| {
            let v = f(x);
            [v.x, v.y, v.z]
        })
        .collect()
}

/// Nodal gradient recovery: volume-weighted average of the tet gradients
/// around each node.
pub fn recovered_gradient(fem: &Fem, u: &[f64], node: usize) -> Mat3 {
    let mut g = Mat3::zeros();
    let mut w = 0.0;
    for (t, tet) in fem.tets.iter().enumerate() {
        if tet.contains(&node) {
            g += fem.gradient(t, u) * fem.vols[t];
            w += fem.vols[t];
        }
    }
    g / w
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
    pub energy: f64,
    pub report: SolveReport,
}

impl DiscreteField {
    pub fn at(&self, node: usize) -> Vec3 {
        Vec3::new(
            self.values[3 * node],
            self.values[3 * node + 1],
            self.values[3 * node + 2],
        )
    }
}

/// Solves the transmission problem with trace ψ on the whole mesh boundary.
pub fn solve_dirichlet(
    mesh: &Mesh,
    fem: &Fem,
    trace: impl Fn(&Vec3) -> Vec3,
    kind: SolverKind,
) -> Result<DiscreteField, SolveError> {
    let fixed = mesh.boundary_nodes();
    let solver = DirichletSolver::new(fem, &fixed, kind)?;
    let g = interpolate(mesh, trace);
    let (values, report) = solver.solve(fem, &g, None)?;
    let energy = fem.energy(&values);
    Ok(DiscreteField {
        values,
        energy,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::mesh::GridSpec;
    use crate::geometry::BoxDomain;
    use crate::polyhedra::Polyhedron;
    use approx::assert_relative_eq;

    fn setup(h: f64) -> Mesh {
        let omega = BoxDomain::centered(Vec3::zeros(), 3.0);
        Mesh::inclusion(&omega, &Polyhedron::cube(Vec3::zeros(), 1.0), h).unwrap()
    }

    fn lame(l: f64, m: f64) -> Lame {
        Lame { lambda: l, mu: m }
    }

    #[test]
    fn element_matrix_symmetric_with_rigid_kernel() {
        let p = [
            Vec3::zeros(),
            Vec3::x(),
            Vec3::new(0.2, 1.0, 0.0),
            Vec3::new(0.1, 0.3, 0.9),
        ];
        let (g, v) = shape_gradients(&p);
        let k = element_stiffness(&g, v, &lame(1.3, 0.7));
        for i in 0..12 {
            for j in 0..12 {
                assert_relative_eq!(k[i][j], k[j][i], epsilon = 1e-14);
            }
        }
        let w = Vec3::new(0.3, -0.2, 0.5);
        let rigid: Vec<f64> = p
            .iter()
            .flat_map(|x| {
                let u = Vec3::new(1.0, 2.0, -1.0) + w.cross(x);
                [u.x, u.y, u.z]
            })
            .collect();
        for i in 0..12 {
            let s: f64 = (0..12).map(|j| k[i][j] * rigid[j]).sum();
            assert!(s.abs() < 1e-13);
        }
    }

    #[test]
    fn rigid_motion_has_zero_energy() {
        let m = setup(0.5);
        let fem = Fem::biphase(&m, lame(2.0, 2.0), lame(1.0, 1.0)).unwrap();
        let w = Vec3::new(0.1, 0.2, -0.3);
        let u = solve_dirichlet(
            &m,
            &fem,
            |x| Vec3::new(0.5, 0.0, 1.0) + w.cross(x),
            SolverKind::Cholesky,
        )
        .unwrap();
        assert!(u.energy.abs() < 1e-12);
        for (n, x) in m.nodes.iter().enumerate() {
            assert_relative_eq!(
                u.at(n),
                Vec3::new(0.5, 0.0, 1.0) + w.cross(x),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn linear_field_exact_for_homogeneous() {
        let m = setup(0.5);
        let c = lame(1.0, 1.5);
        let fem = Fem::biphase(&m, c, c).unwrap();
        let a = Mat3::new(0.1, 0.2, 0.0, -0.3, 0.05, 0.4, 0.2, 0.1, -0.2);
        for kind in [
            SolverKind::Cholesky,
            SolverKind::Pcg {
                tol: 1e-12,
                max_iter: 5000,
            },
        ] {
            let u = solve_dirichlet(&m, &fem, |x| a * x, kind).unwrap();
            for (n, x) in m.nodes.iter().enumerate() {
                assert_relative_eq!(u.at(n), a * x, epsilon = 1e-9);
            }
            let e = a.symmetric_part();
            let density = 2.0 * c.mu * e.norm_squared() + c.lambda * e.trace().powi(2);
            assert_relative_eq!(u.energy, density * 27.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn tangential_gradient_continuous_across_interface() {
        // the trace of u is continuous, so tangential derivatives agree on
        // both sides of each interface facet
        let m = setup(0.25);
        let fem = Fem::biphase(&m, lame(3.0, 2.0), lame(1.0, 1.0)).unwrap();
        let a = Mat3::new(0.2, 0.1, 0.0, 0.0, -0.1, 0.3, 0.1, 0.0, 0.2);
        let u = solve_dirichlet(&m, &fem, |x| a * x, SolverKind::Cholesky).unwrap();
        let mut worst: f64 = 0.0;
        let mut normal_jump: f64 = 0.0;
        for f in m.interface_facets(&m.inside) {
            let gi = fem.gradient(f.inner, &u.values);
            let ge = fem.gradient(f.outer, &u.values);
            let p = Mat3::identity() - f.normal * f.normal.transpose();
            worst = worst.max(((gi - ge) * p).norm());
            normal_jump = normal_jump.max(((gi - ge) * f.normal).norm());
        }
        assert!(worst < 1e-10, "{worst}");
        assert!(normal_jump > 1e-3);
    }

    #[test]
    fn collar_mesh_solves() {
        let omega = BoxDomain::centered(Vec3::zeros(), 2.0);
        let collar = BoxDomain::new(Vec3::new(-0.5, -0.5, 1.0), Vec3::new(0.5, 0.5, 1.5));
        let spec = GridSpec::uniform(omega.union(&collar), 0.25).with_box_breaks(&collar);
        let m = Mesh::grid(&spec, |c| omega.contains(c) || collar.contains(c));
        let fem = Fem::new(&m, vec![lame(1.0, 1.0); m.tets.len()]).unwrap();
        let u =
            solve_dirichlet(&m, &fem, |x| Vec3::new(x.y, 0.0, 0.0), SolverKind::Cholesky).unwrap();
        assert!(u.report.residual < 1e-10);
    }

    #[test]
    fn bad_material_rejected() {
        let m = setup(1.0);
        assert!(matches!(
            Fem::biphase(&m, lame(-1.0, 0.5), lame(1.0, 1.0)),
            Err(SolveError::Material { .. })
        ));
    }
}
