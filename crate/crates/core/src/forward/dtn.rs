//! The discrete local Dirichlet-to-Neumann form on a patch Σ of the box
//! boundary, trace-norm Gram matrices and the operator norm of DtN differences.

use super::fem::{DirichletSolver, Fem, SolveError, SolverKind};
use super::mesh::{BoxFace, Mesh};
use crate::geometry::{plane_frame, BoxDomain, Vec2, Vec3};
use faer::{Mat, Side};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DtnError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("Σ has {0} unknowns in one operator and {1} in the other")]
    Dimension(usize, usize),
    #[error("Σ contains no interior nodes")]
    EmptySigma,
    #[error("eigendecomposition failed")]
    Eigen,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary patch: the interior nodes of one face of the box, in mesh order.
/// Rim nodes carry no basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma {
    pub face: BoxFace,
    pub domain: BoxDomain,
    pub nodes: Vec<usize>,
    /// Triangles of the whole face.
    pub facets: Vec<[usize; 3]>,
}

impl Sigma {
    pub fn on_face(mesh: &Mesh, domain: &BoxDomain, face: BoxFace) -> Result<Sigma, DtnError> {
        let facets = mesh.box_face_facets(domain, face);
        let tol = 1e-9 * domain.diam();
        let mut on = vec![false; mesh.nodes.len()];
        for f in &facets {
            for &i in f {
                on[i] = true;
            }
        }
        let nodes: Vec<usize> = (0..mesh.nodes.len())
            .filter(|&i| {
                on[i]
                    && (0..3).filter(|&k| k != face.axis).all(|k| {
                        let x = mesh.nodes[i][k];
                        x > domain.lo[k] + tol && x < domain.hi[k] - tol
                    })
            })
            .collect();
        if nodes.is_empty() {
            return Err(DtnError::EmptySigma);
        }
        Ok(Sigma {
            face,
            domain: *domain,
            nodes,
            facets,
        })
    }

    pub fn dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Center P_Σ of the face.
    pub fn center(&self) -> Vec3 {
        let mut c = self.domain.center();
        c[self.face.axis] = self.face.coordinate(&self.domain);
        c
    }

    /// Distance from P_Σ to the rest of ∂Ω.
    pub fn clearance(&self) -> f64 {
        let c = self.center();
        (0..3)
            .filter(|&k| k != self.face.axis)
            .map(|k| (c[k] - self.domain.lo[k]).min(self.domain.hi[k] - c[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Values of a trace at Σ nodes, flattened as 3k + c.
    pub fn sample(&self, mesh: &Mesh, f: impl Fn(&Vec3) -> Vec3) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|&i| {
                let v = f(&mesh.nodes[i]);
                [v.x, v.y, v.z]
            })
            .collect()
    }

    /// Full-length boundary data vector with a Σ trace.
    pub fn lift(&self, n_nodes: usize, values: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 3 * n_nodes];
        for (k, &i) in self.nodes.iter().enumerate() {
            g[3 * i..3 * i + 3].copy_from_slice(&values[3 * k..3 * k + 3]);
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct DtnOperator {
    pub sigma: Sigma,
    /// Λ(ψ_a, ψ_b) over the Σ vector hat functions.
    pub matrix: Mat<f64>,
    /// ‖Λ − Λᵀ‖ / ‖Λ‖ in the Frobenius norm.
    pub asymmetry: f64,
    pub max_residual: f64,
}

impl DtnOperator {
    /// ⟨Λf, g⟩ for Σ-sampled traces.
    pub fn pair(&self, f: &[f64], g: &[f64]) -> f64 {
        let n = self.matrix.nrows();
        let mut s = 0.0;
        for j in 0..n {
            if g[j] == 0.0 {
                continue;
            }
            let mut col = 0.0;
            for i in 0..n {
                col += f[i] * self.matrix[(i, j)];
            }
            s += col * g[j];
        }
        s
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let n = self.matrix.nrows();
        let header: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{:e}", self.matrix[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Λ = K_ΣΣ − K_ΣI K_II⁻¹ K_IΣ with every boundary node outside Σ held at zero.
pub fn dtn_assemble(
    mesh: &Mesh,
    fem: &Fem,
    sigma: &Sigma,
    kind: SolverKind,
) -> Result<DtnOperator, DtnError> {
    let fixed = mesh.boundary_nodes();
    let solver = DirichletSolver::new(fem, &fixed, kind)?;
    let sdofs: Vec<usize> = sigma
        .nodes
        .iter()
        .flat_map(|&i| [3 * i, 3 * i + 1, 3 * i + 2])
        .collect();
    let k = &fem.k;
    let m = sdofs.len();
    let mut lam = Mat::<f64>::zeros(m, m);
    let mut max_residual: f64 = 0.0;
    for (c0, chunk) in sdofs.chunks(128).enumerate() {
        let rhs: Vec<Vec<f64>> = chunk
            .iter()
            .map(|&b| {
                let mut r = vec![0.0; solver.n_free()];
                for p in k.indptr[b]..k.indptr[b + 1] {
                    let f = solver.index[k.indices[p]];
                    if f != usize::MAX {
                        r[f] = -k.data[p];
                    }
                }
                r
            })
            .collect();
        let sols = solver.solve_free(&rhs)?;
        for (cc, (&b, (x, rep))) in chunk.iter().zip(sols).enumerate() {
            max_residual = max_residual.max(rep.residual);
            let col = c0 * 128 + cc;
            for (row, &a) in sdofs.iter().enumerate() {
                let mut s = k.get(a, b);
                for p in k.indptr[a]..k.indptr[a + 1] {
                    let f = solver.index[k.indices[p]];
                    if f != usize::MAX {
                        s += k.data[p] * x[f];
                    }
                }
                lam[(row, col)] = s;
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        for j in 0..m {
            num += (lam[(i, j)] - lam[(j, i)]).powi(2);
            den += lam[(i, j)].powi(2);
        }
    }
    Ok(DtnOperator {
        sigma: sigma.clone(),
        matrix: lam,
        asymmetry: (num / den.max(f64::MIN_POSITIVE)).sqrt(),
        max_residual,
    })
}

/// Scalar trace-norm matrices on Σ.
#[derive(Debug, Clone)]
pub struct TraceGrams {
    pub r0: f64,
    pub mass: Mat<f64>,
    pub stiffness: Mat<f64>,
    /// H = r₀⁻¹ M^{1/2} (r₀⁻² I + M^{-1/2} K M^{-1/2})^{1/2} M^{1/2}.
    pub norm: Mat<f64>,
    pub norm_inv_sqrt: Mat<f64>,
}

fn sym_function(a: &Mat<f64>, f: impl Fn(f64) -> f64) -> Result<Mat<f64>, DtnError> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| DtnError::Eigen)?;
    let u = e.U();
    let s = e.S();
    let n = a.nrows();
    let mut us = u.to_owned();
    for j in 0..n {
        let v = f(s[j]);
        for i in 0..n {
            us[(i, j)] *= v;
        }
    }
    Ok(&us * u.transpose())
}

impl TraceGrams {
    pub fn new(mesh: &Mesh, sigma: &Sigma, r0: f64) -> Result<TraceGrams, DtnError> {
        let m = sigma.nodes.len();
        let mut local = vec![usize::MAX; mesh.nodes.len()];
        for (k, &i) in sigma.nodes.iter().enumerate() {
            local[i] = k;
        }
        let (u, v) = plane_frame(&sigma.face.outward());
        let mut mass = Mat::<f64>::zeros(m, m);
        let mut stiff = Mat::<f64>::zeros(m, m);
        for f in &sigma.facets {
            let p: [Vec2; 3] = f.map(|i| Vec2::new(mesh.nodes[i].dot(&u), mesh.nodes[i].dot(&v)));
            let area = 0.5 * ((p[1] - p[0]).perp(&(p[2] - p[0]))).abs();
            // gradients of the barycentric coordinates
            let g: [Vec2; 3] = std::array::from_fn(|a| {
                let (q, r) = (p[(a + 1) % 3], p[(a + 2) % 3]);
                let e = r - q;
                let n = Vec2::new(e.y, -e.x);
                let s = if n.dot(&(p[a] - q)) > 0.0 { 1.0 } else { -1.0 };
                n * s / (2.0 * area)
            });
            for a in 0..3 {
                let ia = local[f[a]];
                if ia == usize::MAX {
                    continue;
                }
                for b in 0..3 {
                    let ib = local[f[b]];
                    if ib == usize::MAX {
                        continue;
                    }
                    mass[(ia, ib)] += area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
                    stiff[(ia, ib)] += area * g[a].dot(&g[b]);
                }
            }
        }
        let m_half = sym_function(&mass, |x| x.max(0.0).sqrt())?;
        let m_inv_half = sym_function(&mass, |x| 1.0 / x.max(f64::MIN_POSITIVE).sqrt())?;
        let a = &m_inv_half * &stiff * &m_inv_half;
        let inner = sym_function(&a, |x| (r0.powi(-2) + x.max(0.0)).sqrt())?;
        let norm = (&m_half * &inner * &m_half) * (1.0 / r0);
        let norm_inv_sqrt = sym_function(&norm, |x| 1.0 / x.max(f64::MIN_POSITIVE).sqrt())?;
        Ok(TraceGrams {
            r0,
            mass,
            stiffness: stiff,
            norm,
            norm_inv_sqrt,
        })
    }

    /// ‖f‖² in the discrete trace norm for a Σ vector trace.
    pub fn norm_sq(&self, f: &[f64]) -> f64 {
        let m = self.norm.nrows();
        let mut s = 0.0;
        for c in 0..3 {
            for i in 0..m {
                for j in 0..m {
                    s += f[3 * i + c] * self.norm[(i, j)] * f[3 * j + c];
                }
            }
        }
        s
    }
}

/// sup ⟨(Λ₀−Λ₁)f, g⟩ / (‖f‖ ‖g‖) over Σ traces.
pub fn dtn_norm_diff(
    l0: &DtnOperator,
    l1: &DtnOperator,
    grams: &TraceGrams,
) -> Result<f64, DtnError> {
    let n = l0.matrix.nrows();
    if l1.matrix.nrows() != n {
        return Err(DtnError::Dimension(n, l1.matrix.nrows()));
    }
    let d = &l0.matrix - &l1.matrix;
    norm_of(&d, grams)
}

/// Dual-primal operator norm of a symmetric Σ form.
pub fn norm_of(d: &Mat<f64>, grams: &TraceGrams) -> Result<f64, DtnError> {
    let n = d.nrows();
    let m = grams.norm_inv_sqrt.nrows();
    if n != 3 * m {
        return Err(DtnError::Dimension(n, 3 * m));
    }
    let mut w = Mat::<f64>::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            for c in 0..3 {
                w[(3 * i + c, 3 * j + c)] = grams.norm_inv_sqrt[(i, j)];
            }
        }
    }
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (d[(i, j)] + d[(j, i)]));
    let b = &w * &sym * &w;
    let ev = b
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| DtnError::Eigen)?;
    Ok(ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::Lame;
    use crate::forward::mesh::GridSpec;
    use crate::polyhedra::Polyhedron;
    use approx::assert_relative_eq;

    fn lame(l: f64, m: f64) -> Lame {
        Lame { lambda: l, mu: m }
    }

    fn omega() -> BoxDomain {
        BoxDomain::centered(Vec3::zeros(), 2.5)
    }

    #[test]
    fn invisible_when_phases_agree() {
        let a = Polyhedron::cube(Vec3::zeros(), 1.0);
        let b = Polyhedron::cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.25));
        let spec = GridSpec::uniform(omega(), 0.25);
        let m = Mesh::inclusions(&spec, &[&a, &b]).unwrap();
        let m2 = m.with_inside(m.tag(&b));
        let c = lame(1.0, 1.0);
        let sigma = Sigma::on_face(&m, &omega(), BoxFace::TOP).unwrap();
        let l0 = dtn_assemble(
            &m,
            &Fem::biphase(&m, c, c).unwrap(),
            &sigma,
            SolverKind::Cholesky,
        )
        .unwrap();
        let l1 = dtn_assemble(
            &m2,
            &Fem::biphase(&m2, c, c).unwrap(),
            &sigma,
            SolverKind::Cholesky,
        )
        .unwrap();
        let grams = TraceGrams::new(&m, &sigma, 0.5).unwrap();
        assert!(dtn_norm_diff(&l0, &l1, &grams).unwrap() == 0.0);
        assert!(l0.asymmetry < 1e-8);
    }

    #[test]
    fn monotone_pair_has_one_sign() {
        let spec = GridSpec::uniform(omega(), 0.3125);
        let p = Polyhedron::cube(Vec3::zeros(), 1.0);
        let m = Mesh::inclusions(&spec, &[&p]).unwrap();
        let sigma = Sigma::on_face(&m, &omega(), BoxFace::TOP).unwrap();
        let ext = lame(1.0, 1.0);
        let l_d = dtn_assemble(
            &m,
            &Fem::biphase(&m, lame(2.0, 2.0), ext).unwrap(),
            &sigma,
            SolverKind::Cholesky,
        )
        .unwrap();
        let l_e = dtn_assemble(
            &m,
            &Fem::biphase(&m, ext, ext).unwrap(),
            &sigma,
            SolverKind::Cholesky,
        )
        .unwrap();
        let d = &l_d.matrix - &l_e.matrix;
        let ev = d.self_adjoint_eigenvalues(Side::Lower).unwrap();
        // a stiffer inclusion raises every Dirichlet energy
        assert!(ev
            .iter()
            .all(|&x| x > -1e-10 * ev.iter().fold(0.0f64, |a, b| a.max(b.abs()))));
        let grams = TraceGrams::new(&m, &sigma, 0.5).unwrap();
        let n1 = dtn_norm_diff(&l_d, &l_e, &grams).unwrap();
        let double = DtnOperator {
            matrix: &l_d.matrix * 2.0,
            ..l_d.clone()
        };
        let twice = DtnOperator {
            matrix: &l_e.matrix * 2.0,
            ..l_e.clone()
        };
        assert_relative_eq!(
            dtn_norm_diff(&double, &twice, &grams).unwrap(),
            2.0 * n1,
            max_relative = 1e-12
        );
        // agreement of the pairing with a direct energy
        let f = sigma.sample(&m, |x| {
            let b = (1.25 - x.x.abs()) * (1.25 - x.y.abs());
            Vec3::new(0.0, 0.1 * b, -b)
        });
        let fem = Fem::biphase(&m, lame(2.0, 2.0), ext).unwrap();
        let solver = DirichletSolver::new(&fem, &m.boundary_nodes(), SolverKind::Cholesky).unwrap();
        let (u, _) = solver
            .solve(&fem, &sigma.lift(m.nodes.len(), &f), None)
            .unwrap();
        assert_relative_eq!(l_d.pair(&f, &f), fem.energy(&u), max_relative = 1e-9);
    }

    #[test]
    fn grams_are_consistent() {
        let spec = GridSpec::uniform(omega(), 0.25);
        let m = Mesh::grid(&spec, |_| true);
        let sigma = Sigma::on_face(&m, &omega(), BoxFace::TOP).unwrap();
        let g = TraceGrams::new(&m, &sigma, 0.5).unwrap();
        let ones: Vec<f64> = vec![1.0; sigma.nodes.len()];
        let total: f64 = (0..ones.len())
            .map(|i| (0..ones.len()).map(|j| g.mass[(i, j)]).sum::<f64>())
            .sum();
        // interior hats integrate to less than the face area
        assert!(total > 0.0 && total < 2.5 * 2.5);
        let ev = g.norm.self_adjoint_eigenvalues(Side::Lower).unwrap();
        assert!(ev[0] > 0.0);
        assert_relative_eq!(sigma.clearance(), 1.25);
    }
}
