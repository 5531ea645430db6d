//! Martingale Schrödinger bridges.
//!
//! Discrete entropic martingale transport with certified primal, dual and
//! variational values; Gaussian closed forms; exact simulation of the
//! Föllmer martingale; the filtering representation; and a three-point
//! entropy versus Bass comparison.

pub mod dynamics;
pub mod error;
pub mod filtering;
pub mod gaussian;
pub mod linalg;
pub mod lp;
pub mod measures;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod threepoint;

pub use error::{Error, Result};
pub use measures::{
    check_convex_order, gaussian_reference_identity_check, mcov_discrete, relative_entropy,
    Coupling, DiscreteMeasure, Entropy, GaussianSpec, MartingaleCoupling, MeasureDocument,
};
pub use solver::{
    classical_sinkhorn_sp, dual_value, extract_base_measure, inner_dual_solve, primal_value,
    sinkhorn_msb, vp_value, PotentialTriple, SolveReport, SolverConfig,
};
