//! Numerical laboratory for the 2-D gradient interface field with a uniformly
//! convex nearest-neighbor potential.
//!
//! The crate samples the field by checkerboard heat-bath MCMC (with an exact
//! Gaussian sampler as oracle for the quadratic potential), provides the
//! discrete elliptic toolkit that everything else leans on (Dirichlet solves,
//! Green functions, harmonic measure, `H^{-1}` norms), builds the multiscale
//! harmonic-average machinery (scale ladder, circle averages, increment
//! processes, annulus weights), computes quenched homogenization quantities
//! (subadditive energies, effective matrices, correctors, two-scale
//! expansions), and runs the characteristic-function / empirical-density
//! diagnostics behind the local central limit theorem, including
//! Brascamp-Lieb and Mermin-Wagner style inequality probes.
//!
//! All Monte-Carlo entry points are deterministic given a master seed; the
//! sequential and parallel code paths produce identical output.

pub mod cltlab;
pub mod config;
pub mod elliptic;
pub mod gradcli;
pub mod homogenize;
pub mod io;
pub mod lattice;
pub mod mermin;
pub mod multiscale;
pub mod par;
pub mod potential;
pub mod sampler;
pub mod stats;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vertex {0:?} outside domain")]
    OutsideDomain(lattice::Vertex),
    #[error("ball of radius {radius} around {center:?} escapes the domain")]
    BallEscapesDomain {
        center: lattice::Vertex,
        radius: f64,
    },
    #[error("solver failed to converge after {iterations} iterations (residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("single-site rejection sampler exhausted {proposals} proposals at site {site:?}; the potential is likely inconsistent with its declared convexity bounds")]
    RejectionExhausted {
        site: lattice::Vertex,
        proposals: u64,
    },
    #[error("boundary condition violates the decoupling hypothesis: max|f| = {max_abs:.3} > {limit:.3}")]
    BoundaryTooLarge { max_abs: f64, limit: f64 },
    #[error("density fails the circle ratio condition (worst deficit {deficit:.3e})")]
    RatioConditionFailed { deficit: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
