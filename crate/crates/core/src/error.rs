//! Error type shared by every module in the crate.

use num_complex::Complex64;

/// Crate-wide error enum. Numerical checks that are expected to fail as part
/// of a report (hypothesis validation, membership tests) do not use this type;
/// they record pass/fail entries instead. Errors are reserved for violated
/// preconditions and numerical breakdown.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Evaluation requested at (or too close to) a pole of an inverse factor.
    #[error("evaluation point {z} coincides with a factor singularity at {pole}")]
    Singularity { z: Complex64, pole: Complex64 },

    /// The determinant vanishes identically; there is no zero set to speak of.
    #[error("determinant is identically zero; the function is nowhere invertible")]
    ZeroPolynomial,

    /// A deflation step was asked to remove a point that is not a zero.
    #[error("function is numerically invertible at {z} (sigma_min/sigma_max = {ratio:.3e}); not a zero")]
    NotAZero { z: Complex64, ratio: f64 },

    /// The chosen base point is itself a zero, so factors are ill-defined.
    #[error("base point {z0} is singular for the function being factored")]
    BasePointSingular { z0: Complex64 },

    /// Deflation removed more rank than the determinant degree allows.
    #[error("deflated rank {deflated} exceeds determinant degree {bound}; aborting factorization")]
    IterationLimit { deflated: usize, bound: usize },

    /// Cokernel ranges of the two components of a pair disagree at a shared zero.
    #[error("cokernel projections of the pair differ at {x} by {mismatch:.3e}")]
    RangeMismatch { x: Complex64, mismatch: f64 },

    /// A commutation precondition between two pairs fails.
    #[error("commutation check '{relation}' fails at {z} with residual {residual:.3e}")]
    Commutation {
        relation: &'static str,
        z: Complex64,
        residual: f64,
    },

    /// Adaptive quadrature exhausted its doubling budget.
    #[error("quadrature did not converge after {doublings} interval doublings (last marginal {marginal:.3e})")]
    Convergence { doublings: u32, marginal: f64 },

    /// The integrand overflowed or produced NaN at a quadrature node. For
    /// membership tests this is evidence of a divergent integral and is
    /// downgraded to a failing entry rather than an error.
    #[error("non-finite integrand value at t = {t}")]
    NonFiniteIntegrand { t: f64 },

    /// A claimed factor relation does not hold on the verification grid.
    #[error("factor identity fails at {z} with residual {residual:.3e}")]
    FactorMismatch { z: Complex64, residual: f64 },

    /// Invalid argument or out-of-domain request.
    #[error("domain error: {0}")]
    Domain(String),

    /// Fixture name not recognized by the command line driver.
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),

    /// Linear algebra or floating point breakdown with no more specific class.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input text or JSON.
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class for the command line driver: usage and parse
    /// problems are 2, numerical failures 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) | Error::UnknownFixture(_) => 2,
            _ => 3,
        }
    }
}
