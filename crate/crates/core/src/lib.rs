//! Finite-dimensional kernels for canonical quantum algebras: normal-ordered
//! Weyl and Clifford polynomials, Grassmann elements, truncated Fock
//! representations, L-functionals, Gibbs states and GNS carriers.
//!
//! Coefficient-generic code is written against [`scalar::Coeff`]; the aliases
//! below fix the two rings in use, `f64` complex and exact Gaussian rationals.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decoherence;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod geometry_gns;
pub mod grassmann;
pub mod lfunctional;
pub mod linalg;
pub mod quad;
pub mod scalar;
pub mod statmech;
pub mod weyl_clifford;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub type C64 = Complex64;

/// Gaussian rationals, the exact coefficient ring.
pub type ExactComplex = num_complex::Complex<num_rational::BigRational>;
pub type WeylPoly = weyl_clifford::NormalOrderedPolynomial<C64>;
pub type ExactWeylPoly = weyl_clifford::NormalOrderedPolynomial<ExactComplex>;
pub type Grassmann = grassmann::GrassmannElement<C64>;
pub type ExactGrassmann = grassmann::GrassmannElement<ExactComplex>;
pub type LTaylor = lfunctional::TaylorLFunctional<C64>;
