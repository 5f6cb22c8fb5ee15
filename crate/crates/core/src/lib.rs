//! Numerical toolkit for vector-valued de Branges spaces built from pairs of
//! matrix entire functions.
//!
//! The objects here revolve around a pair `(E_minus, E_plus)` of n-by-n entire
//! matrix functions for which `E_plus` is invertible on the closed upper half
//! plane, `E_minus` on the closed lower one, and the quotient
//! `chi = E_plus^{-1} E_minus` is inner from both sides. Such a pair carries a
//! reproducing kernel Hilbert space of n-vector entire functions whose kernel
//! is a ratio of the pair against the Cauchy denominator `-2 pi i (z - conj w)`.
//!
//! Modules:
//! - [`matfun`]: matrix polynomials, rank-projection elementary factors, and a
//!   small closed union of evaluable matrix functions (products, inverses of
//!   elementary factors, scalar exponential twists).
//! - [`spectral`]: determinant polynomials via interpolation, zero location and
//!   clustering through a companion linearization, cokernel/kernel projections.
//! - [`factor`]: one-step deflation of a zero, global and real-axis restricted
//!   factorizations into elementary factors, joint factorization of a pair,
//!   partial products and their tail bounds.
//! - [`debranges`]: hypothesis validation for a pair, kernels, Gram matrices,
//!   norm quadrature on the line, Hardy-space membership tests, isometric
//!   embedding checks, and the product construction for two pairs.
//! - [`assoc`]: functions associated to a space, the resolvent-type difference
//!   transform, and lifting associated functions through a common factor.
//! - [`cli`]: a JSON-reporting command line driver over the above.

pub mod error;
pub mod linalg;
pub mod quad;
pub mod matfun;
pub mod spectral;
pub mod debranges;
pub mod factor;
pub mod assoc;
pub mod json;
pub mod cli;

pub use error::{Error, Result};
