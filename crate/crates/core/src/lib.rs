//! Numerical laboratory for Lipschitz stability of polyhedral inclusions in
//! linear elasticity from a local Dirichlet-to-Neumann map.

pub mod cli;
pub mod elasticity;
pub mod forward;
pub mod geometry;
pub mod greens;
pub mod homotopy;
pub mod kernels;
pub mod moment;
pub mod polyhedra;
pub mod shape_deriv;
