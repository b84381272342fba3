//! Numerical core for complex m-Hessian equations on the flat torus:
//! the pointwise S_k algebra, cone-safeguarded Newton solvers, the
//! beta-penalized envelope scheme, Hessian capacities, energy functionals
//! and a verification harness for the structural theorems behind them.

pub mod algebra;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod hessian;
pub mod io;
pub mod solver;
pub mod envelope;

pub use error::{CoreError, Result};
pub use field::{
    integrate, integrate_density, integrate_on, integrate_product, DensityField, EigenField,
    HermitianHessianField, ScalarField, SetMask, NEG_INFINITY_SENTINEL,
};
pub use grid::TorusGrid;
pub use hessian::{complex_hessian, mollify, Backend};
