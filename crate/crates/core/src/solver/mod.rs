//! Staggered-grid discretization of `∇×μ⁻¹∇×E − ω²εE` and its linear solvers.

pub mod dense;
pub mod incidence;
pub mod krylov;
pub mod multifrontal;
pub mod sparse;
mod system;

pub use system::{
    apply_edge_mass, apply_face_mass, assemble_parts, derive_h_from_e, discrete_curl,
    discrete_dual_curl, locate_resonance, residual, FieldPair, Parts, SolverOptions, SourceTerm,
    SystemMatrix, TangentialTrace,
};
