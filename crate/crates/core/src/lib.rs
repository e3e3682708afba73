//! Numerical toolkit for degenerate elliptic and parabolic systems on
//! boxes `(0, b_1) x ... x (0, b_n)` whose diffusion degenerates like
//! `x_k^alpha_k` at the faces `x_k = 0`.
//!
//! Derivatives `D^[i] = (x^alpha d/dx)^i` become ordinary derivatives in the
//! variable `tau = x^(1-alpha)/(1-alpha)`, so every grid is uniform in `tau`
//! and all stencils are plain finite differences there.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bc;
pub mod coefficients;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod nonlinear;
pub mod parabolic;
pub mod pollutant;
pub mod report;
pub mod sector;
pub mod spaces;

pub use bc::{BoundaryFunctional, NonlocalBc};
pub use coefficients::CoefficientField;
pub use elliptic::{assemble, solve, DiscreteOperator};
pub use error::{Error, Result};
pub use grid::{degen_derivative, DegenerateAxis, GridFunction, GridSpec};
pub use linalg::{CMatrix, C64};
pub use sector::SectorSpec;
pub use spaces::NormSpec;
