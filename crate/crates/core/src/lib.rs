//! Laplacian spectra on balls, annuli and symmetric perturbed annuli in the
//! simply connected space forms, with the machinery to compare the low Neumann
//! eigenvalues of a domain against those of the volume-matched annulus.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domains;
pub mod error;
pub mod fem2d;
pub mod quadrature;
pub mod slsolver;
pub mod spaceform;
pub mod special;
pub mod spectrum;
pub mod spline;
pub mod tridiag;

pub use error::{Error, Result};
pub use slsolver::{BoundaryCondition, SLEigenpair, SLProblem, SolverConfig};
pub use spaceform::SpaceForm;
