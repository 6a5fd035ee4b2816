//! Finite element laboratory for the linear Moore-Gibson-Thompson equation
//!
//! ```text
//! τ u_ttt + α u_tt - c² Δu - b Δu_t = 0
//! ```
//!
//! with the feedback condition `∂u/∂ν + η u_t = 0` on Γ0 and homogeneous
//! Dirichlet data on Γ1.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod linalg;
pub mod model;

pub use assembly::{assemble_fem, Problem, CompanionSystem, DiscreteOperators, DofMap, GeneratorBundle};
pub use error::{MgtError, Result};
pub use evolution::{integrate, InitialPreset, Scheme, TraceResidual, Trajectory};
pub use geometry::{build_mesh, partition_boundary, BoundaryPartition, DomainSpec, MeshGeometry, Point};
pub use model::{
    derive_params, validate_stability_assumptions, AssumptionDiagnostics, PhysicalParams, ScalarField, StateTriple,
    ZStateTriple,
};
