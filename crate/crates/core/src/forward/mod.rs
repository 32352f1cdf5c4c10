//! Forward transmission problem on a box with a polyhedral inclusion:
//! meshing, finite elements and the local Dirichlet-to-Neumann form.

mod dtn;
mod fem;
mod mesh;

pub use dtn::{dtn_assemble, dtn_norm_diff, norm_of, DtnError, DtnOperator, Sigma, TraceGrams};
pub use fem::{
    element_stiffness, interpolate, pcg, recovered_gradient, shape_gradients, solve_dirichlet, Csr,
    DirichletSolver, DiscreteField, Fem, SolveError, SolveReport, SolverKind,
};
pub use mesh::{BoxFace, Focus, GridSpec, InterfaceFacet, Mesh, MeshError, MeshQuality};
