//! Numerical bimaterial Green's function on a large box: Kelvin matrix of the
//! upper phase plus a corrector for the lower half-space, compared with the
//! closed form of ∂₃Γᴿ₃₃.

use super::{corrector_load, AdaptiveRule, GreensError};
use crate::forward::{recovered_gradient, DirichletSolver, Fem, Focus, GridSpec, Mesh, SolverKind};
use crate::geometry::{BoxDomain, Vec3};
use crate::kernels::{kelvin, rongved_d33, BimaterialConfig};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RongvedOracleOptions {
    /// Half-width of the box in units of r.
    pub half_width: f64,
    /// Mesh size next to the probes in units of r.
    pub h: f64,
    /// Mesh size far away in units of r.
    pub coarse: f64,
    pub ratio: f64,
}

impl Default for RongvedOracleOptions {
    fn default() -> Self {
        Self {
            half_width: 12.0,
            h: 0.125,
            coarse: 3.0,
            ratio: 1.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RongvedProbe {
    pub x: [f64; 3],
    pub closed: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RongvedStudy {
    pub options: RongvedOracleOptions,
    pub dofs: usize,
    pub probes: Vec<RongvedProbe>,
    pub max_relative_error: f64,
}

/// Points of the upper half-space at distance about r/2 from the origin,
/// on multiples of r/8.
pub fn default_probes(r: f64) -> Vec<Vec3> {
    [
        [0.5, 0.0, 0.125],
        [0.375, 0.25, 0.25],
        [0.25, 0.25, 0.375],
        [0.0, -0.5, 0.125],
        [-0.25, 0.375, 0.25],
    ]
    .iter()
    .map(|p| Vec3::from(*p) * r)
    .collect()
}

pub fn rongved_fem_oracle(
    cfg: &BimaterialConfig,
    probes: &[Vec3],
    opts: &RongvedOracleOptions,
    kind: SolverKind,
) -> Result<RongvedStudy, GreensError> {
    let r = cfg.r;
    let upper = cfg.exterior();
    let lower = cfg.interior();
    let bounds = BoxDomain::centered(Vec3::zeros(), 2.0 * opts.half_width * r);
    let mut spec = GridSpec::uniform(bounds, opts.coarse * r).with_focus(Focus {
        center: Vec3::new(0.0, 0.0, 0.125 * r),
        radius: 0.75 * r,
        h: opts.h * r,
        ratio: opts.ratio,
    });
    spec.breaks[2].push(0.0);
    for p in probes {
        for k in 0..3 {
            spec.breaks[k].push(p[k]);
        }
    }
    let mut mesh = Mesh::grid(&spec, |_| true);
    mesh.inside = (0..mesh.tets.len())
        .map(|t| mesh.centroid(t).z < 0.0)
        .collect();
    let lame = mesh
        .inside
        .iter()
        .map(|&i| if i { lower.lame() } else { upper.lame() })
        .collect();
    let fem = Fem::new(&mesh, lame)?;
    let pole = cfg.pole();
    let l = Vec3::z();
    let fixed = mesh.boundary_nodes();
    let mut g = vec![0.0; fem.dofs()];
    for (n, x) in mesh.nodes.iter().enumerate() {
        if fixed[n] {
            let v = -kelvin(x, &pole, &upper)?.matrix * l;
            g[3 * n..3 * n + 3].copy_from_slice(v.as_slice());
        }
    }
    let load = corrector_load(&fem, &mesh, &upper, &pole, &l, &AdaptiveRule::default())?;
    let solver = DirichletSolver::new(&fem, &fixed, kind)?;
    let (w, _) = solver.solve(&fem, &g, Some(&load))?;
    let mut out = Vec::with_capacity(probes.len());
    for p in probes {
        let node = (0..mesh.nodes.len())
            .min_by(|&a, &b| {
                (mesh.nodes[a] - p)
                    .norm()
                    .total_cmp(&(mesh.nodes[b] - p).norm())
            })
            .expect("non-empty mesh");
        let x = mesh.nodes[node];
        let numeric =
            kelvin(&x, &pole, &upper)?.grad[2][(2, 2)] + recovered_gradient(&fem, &w, node)[(2, 2)];
        let closed = rongved_d33(&x, cfg)?;
        out.push(RongvedProbe {
            x: x.into(),
            closed,
            numeric,
            relative_error: (numeric - closed).abs() / closed.abs(),
        });
    }
    Ok(RongvedStudy {
        options: *opts,
        dofs: fem.dofs(),
        max_relative_error: out.iter().map(|p| p.relative_error).fold(0.0, f64::max),
        probes: out,
    })
}
