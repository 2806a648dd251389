//! Staggered grid, voxel regions, boundary patches and covering constructions.

pub mod chain;
pub mod grid;
pub mod patch;
pub mod region;

pub use chain::{chain_of_balls, cube_cover, volume_bound, BallChain, Cube};
pub use grid::{Edge, Face, Grid, AXES};
pub use patch::{boundary_patch, full_boundary, BoundaryPatch, PatchSpec, Rim, Side, Window};
pub use region::{carve_region, interior_margin, Region, Role, Shape};
