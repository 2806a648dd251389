//! Desk-scale numerical laboratory for quantitative Runge approximation and Cauchy
//! stability of the time-harmonic Maxwell system on a box.
//!
//! Numerical types are generic over `T: scalar::Real`; the aliases below fix `T = f64`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod materials;
pub mod oracle;
pub mod runge_op;
pub mod scalar;
pub mod solver;
pub mod store;

pub type Scalar = f64;
pub type C64 = scalar::Complex<f64>;
pub type Grid = geometry::Grid<f64>;
pub type Region = geometry::Region<f64>;
pub type BoundaryPatch = geometry::BoundaryPatch<f64>;
pub type MaterialField = materials::MaterialField<f64>;
pub type SystemMatrix = solver::SystemMatrix<f64>;
pub type FieldPair = solver::FieldPair<f64>;
pub type TangentialTrace = solver::TangentialTrace<f64>;
pub type SourceTerm = solver::SourceTerm<f64>;
pub type NormWeights = analysis::NormWeights<f64>;
pub type RestrictionOperator = runge_op::RestrictionOperator<f64>;
pub type SvdBundle = runge_op::SvdBundle<f64>;
pub type AnalyticSolution = oracle::AnalyticSolution<f64>;
