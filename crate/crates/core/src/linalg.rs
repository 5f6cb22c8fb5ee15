//! Thin wrappers over nalgebra for the complex dense kernels the crate needs:
//! SVD with guaranteed ordering, LU solves and determinants, Schur
//! eigenvalues, and Hermitian spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Exponential that stays NaN-free on the real axis: the polar form turns an
/// overflowing modulus into `inf * sin(0) = NaN` for the imaginary part.
pub fn cexp(z: C64) -> C64 {
    if z.im == 0.0 {
        C64::new(z.re.exp(), z.im)
    } else {
        z.exp()
    }
}

/// Reciprocal by Smith's algorithm. The operator form `1 / z` squares the
/// modulus, so it returns 0 (or NaN at infinities) once `|z|` passes
/// `sqrt(f64::MAX)`; exponential twist values get there around `Re z = 355`.
pub fn recip(z: C64) -> C64 {
    if z.im == 0.0 {
        return C64::new(1.0 / z.re, -z.im);
    }
    if z.re == 0.0 {
        return C64::new(z.re, -1.0 / z.im);
    }
    if z.re.abs() >= z.im.abs() {
        let r = z.im / z.re;
        let d = z.re + z.im * r;
        C64::new(1.0 / d, -r / d)
    } else {
        let r = z.re / z.im;
        let d = z.re * r + z.im;
        C64::new(r / d, -1.0 / d)
    }
}

/// Frobenius norm.
pub fn frob(m: &CMat) -> f64 {
    m.norm()
}

/// Singular values sorted in non-increasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    // nalgebra documents descending order; sort defensively since downstream
    // rank logic depends on it.
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Full SVD as (U, sigma, V^H) with sigma non-increasing and U, V^H columns /
/// rows permuted to match.
pub fn svd_full(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("svd did not produce U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("svd did not produce V^H".into()))?;
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&j| s[j]).collect();
    let u2 = CMat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vt2 = CMat::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]);
    Ok((u2, sorted, vt2))
}

/// Largest singular value; 0 for the zero matrix.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Default rank-decision tolerance: sigma_max * n * sqrt(machine epsilon).
pub fn default_rank_tol(sigma_max: f64, n: usize) -> f64 {
    sigma_max * n as f64 * f64::EPSILON.sqrt()
}

pub fn det(m: &CMat) -> C64 {
    m.clone().lu().determinant()
}

/// LU solve of a single right-hand side; None when the factor is singular.
pub fn solve(m: &CMat, b: &CVec) -> Option<CVec> {
    m.clone().lu().solve(b)
}

/// LU solve with a matrix right-hand side.
pub fn solve_mat(m: &CMat, b: &CMat) -> Option<CMat> {
    m.clone().lu().solve(b)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// Eigenvalues of a general complex square matrix through a Schur reduction.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let schur = m
        .clone()
        .try_schur(1e-14, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur form yielded no eigenvalues".into()))?;
    Ok(ev.iter().copied().collect())
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// first so that callers may pass matrices that are Hermitian only up to
/// rounding.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Hermitian part deviation ||M - M^H||.
pub fn hermitian_defect(m: &CMat) -> f64 {
    frob(&(m - m.adjoint()))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &CVec) -> f64 {
    v.norm()
}

/// Inner product <a, b> = sum a_i conj(b_i), linear in the first slot.
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    // nalgebra's dotc conjugates its receiver: b.dotc(a) = sum conj(b_i) a_i.
    b.dotc(a)
}

/// Deterministic low-discrepancy points on a disk |z - center| <= radius,
/// used for verification grids. Golden-angle spiral, no randomness involved.
pub fn spiral_grid(center: C64, radius: f64, count: usize) -> Vec<C64> {
    const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
    (0..count)
        .map(|j| {
            let r = radius * (((j + 1) as f64) / count as f64).sqrt();
            let theta = GOLDEN_ANGLE * j as f64;
            center + C64::from_polar(r, theta)
        })
        .collect()
}

/// Small deterministic linear congruential generator for reproducible
/// scattering of probe points inside library routines. Not for statistics.
#[derive(Clone, Debug)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493) }
    }

    pub fn next_u64(&mut self) -> u64 {
        // Numerical Recipes 64-bit LCG constants.
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform complex in the square [-s, s]^2.
    pub fn next_complex(&mut self, s: f64) -> C64 {
        let re = (2.0 * self.next_f64() - 1.0) * s;
        let im = (2.0 * self.next_f64() - 1.0) * s;
        C64::new(re, im)
    }
}
