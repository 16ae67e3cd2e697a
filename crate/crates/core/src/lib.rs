//! Level-set percolation of the Gaussian free field on cable systems of
//! finite boxes of transient lattices.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: weighted graphs, lattice boxes, edge refinement, balls;
//! - [`linalg`]: sparse factorisation, preconditioned CG and the sine
//!   transform that diagonalises the unit-weight box Laplacian;
//! - [`potential`]: Green functions, equilibrium measures and capacities;
//! - [`gff`]: exact samplers of the zero-boundary free field;
//! - [`percolation`]: edge opening, clusters of the origin, cable tips and
//!   cluster capacities;
//! - [`interlacements`]: trajectory soups and local uniqueness;
//! - [`experiments`]: Monte Carlo estimators and their reference values;
//! - [`stats`]: intervals, regressions and number formatting.

pub mod experiments;
pub mod gff;
pub mod graph;
pub mod interlacements;
pub mod linalg;
pub mod percolation;
pub mod potential;
pub mod rng;
pub mod stats;

pub use experiments::{EstimateRecord, ExperimentConfig, Provenance, Summary};
pub use gff::FieldSample;
pub use graph::{BoxLattice, LatticeSpec, Network, RefinedGraph, WeightMode, WeightedGraph};
pub use percolation::{Boundedness, Censoring, ClusterResult};
pub use potential::{GreenTable, PotentialSolve};
pub use rng::SampleKey;

/// Errors reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-transient dimension d = {0} (need d >= 3)")]
    NonTransient(usize),
    #[error("observation radius {obs_radius} must be at most half side {half_side} - 1")]
    Window { obs_radius: usize, half_side: usize },
    #[error("subdivision m must be at least 1")]
    Subdivision,
    #[error("vertex {0} lies on the Dirichlet boundary")]
    BoundaryCenter(usize),
    #[error("graph: {0}")]
    Graph(String),
    #[error("solver failed after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("set: {0}")]
    Set(String),
    #[error("domain mismatch between field and potential")]
    DomainMismatch,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
