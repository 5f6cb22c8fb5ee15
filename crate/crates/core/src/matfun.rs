//! Matrix polynomials, elementary factors built from projections, and a small
//! closed union of evaluable matrix functions.
//!
//! The elementary factor with base point `z0`, zero `zk`, Hermitian idempotent
//! `P`, and order `m` is, writing `t = (z - z0) / (zk - z0)` and
//! `g_m(t) = sum_{j=1..m} t^j / j`:
//!
//! - plain mode:      `B(z) = I - t P`
//! - canonical mode:  `B(z) = (I - t P) exp(g_m(t) P) = I + ((1 - t) e^{g_m(t)} - 1) P`
//!
//! The closed forms on the right follow from `P^2 = P`: every power series in
//! `t P` collapses to `I + (scalar) P`. The same identity gives closed-form
//! inverses, determinants `((1 - t) e^{g_m(t)})^r` with `r = rank P`, and the
//! derivative `-t^m e^{g_m(t)} / (zk - z0) P`, which is what makes high-order
//! factors cheap to differentiate exactly.

use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, frob, CMat, CVec, C64};

/// Relative threshold for trimming trailing polynomial coefficients.
pub const TRIM_REL_TOL: f64 = 1e-14;

/// Absolute radius around an inverse factor's pole inside which evaluation
/// refuses to proceed.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// Radius around the shift point inside which divided differences switch to
/// their derivative branch.
pub const DIVIDED_DIFF_SWITCH: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Scalar polynomial helpers (coefficient vectors, ascending powers).

pub(crate) fn sp_trim(mut coeffs: Vec<C64>) -> Vec<C64> {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let tol = TRIM_REL_TOL * max;
    while coeffs.len() > 1 && coeffs.last().map(|c| c.norm() <= tol).unwrap_or(false) {
        coeffs.pop();
    }
    if coeffs.is_empty() {
        coeffs.push(linalg::ZERO);
    }
    coeffs
}

pub(crate) fn sp_eval(coeffs: &[C64], z: C64) -> C64 {
    let mut acc = linalg::ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

pub(crate) fn sp_derivative(coeffs: &[C64]) -> Vec<C64> {
    if coeffs.len() <= 1 {
        return vec![linalg::ZERO];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * cr(k as f64))
        .collect()
}

pub(crate) fn sp_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![linalg::ZERO; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub(crate) fn sp_conj(a: &[C64]) -> Vec<C64> {
    a.iter().map(|c| c.conj()).collect()
}

/// Coefficients of (z - z0)^m.
pub(crate) fn sp_power_of_linear(z0: C64, m: usize) -> Vec<C64> {
    let lin = vec![-z0, linalg::ONE];
    let mut acc = vec![linalg::ONE];
    for _ in 0..m {
        acc = sp_mul(&acc, &lin);
    }
    acc
}

// ---------------------------------------------------------------------------

/// Square matrix polynomial, stored as ascending coefficient blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct MatPoly {
    n: usize,
    coeffs: Vec<CMat>,
}

impl MatPoly {
    /// Builds a polynomial from coefficient blocks `C_0, ..., C_d`. Trailing
    /// blocks of Frobenius norm at most `1e-14` times the largest block are
    /// trimmed; the zero polynomial keeps a single zero block.
    pub fn new(n: usize, coeffs: Vec<CMat>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("matrix dimension must be positive".into()));
        }
        for (k, c) in coeffs.iter().enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Domain(format!(
                    "coefficient {k} has shape {}x{}, expected {n}x{n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        let mut coeffs = if coeffs.is_empty() { vec![linalg::zeros(n)] } else { coeffs };
        let max = coeffs.iter().map(frob).fold(0.0f64, f64::max);
        let tol = TRIM_REL_TOL * max;
        while coeffs.len() > 1 && frob(coeffs.last().unwrap()) <= tol {
            coeffs.pop();
        }
        Ok(MatPoly { n, coeffs })
    }

    pub fn constant(c: CMat) -> Result<Self> {
        let n = c.nrows();
        if n == 0 || c.ncols() != n {
            return Err(Error::Domain("constant coefficient must be square and nonempty".into()));
        }
        Ok(MatPoly { n, coeffs: vec![c] })
    }

    pub fn identity(n: usize) -> Self {
        MatPoly { n, coeffs: vec![linalg::identity(n)] }
    }

    pub fn zero(n: usize) -> Self {
        MatPoly { n, coeffs: vec![linalg::zeros(n)] }
    }

    /// Scalar polynomial embedded as a 1x1 matrix polynomial.
    pub fn scalar(coeffs: &[C64]) -> Self {
        let coeffs = sp_trim(coeffs.to_vec());
        MatPoly { n: 1, coeffs: coeffs.into_iter().map(|c| CMat::from_element(1, 1, c)).collect() }
    }

    /// (z - alpha) times the identity.
    pub fn linear(alpha: C64, n: usize) -> Self {
        MatPoly { n, coeffs: vec![linalg::identity(n) * (-alpha), linalg::identity(n)] }
    }

    /// Scalar polynomial with the given roots, embedded as 1x1.
    pub fn scalar_from_roots(roots: &[C64]) -> Self {
        let mut acc = vec![linalg::ONE];
        for &r in roots {
            acc = sp_mul(&acc, &[-r, linalg::ONE]);
        }
        MatPoly::scalar(&acc)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &CMat {
        &self.coeffs[k]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| frob(c) == 0.0)
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(frob).fold(0.0f64, f64::max)
    }

    /// Horner evaluation.
    pub fn eval(&self, z: C64) -> CMat {
        let mut acc = self.coeffs.last().unwrap().clone();
        for k in (0..self.coeffs.len() - 1).rev() {
            acc = acc * z + &self.coeffs[k];
        }
        acc
    }

    /// Evaluation applied to a vector, avoiding matrix-matrix products.
    pub fn eval_vec(&self, z: C64, v: &CVec) -> CVec {
        let m = self.eval(z);
        &m * v
    }

    pub fn derivative(&self) -> MatPoly {
        if self.coeffs.len() == 1 {
            return MatPoly::zero(self.n);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * cr(k as f64))
            .collect();
        MatPoly::new(self.n, coeffs).unwrap()
    }

    /// Exact backward divided difference by synthetic division: the result
    /// `R` satisfies `(z - alpha) R(z) + f(alpha) = f(z)` in coefficient
    /// arithmetic.
    pub fn divided_difference(&self, alpha: C64) -> MatPoly {
        let d = self.degree();
        if d == 0 {
            return MatPoly::zero(self.n);
        }
        let mut b = vec![linalg::zeros(self.n); d];
        b[d - 1] = self.coeffs[d].clone();
        for j in (1..d).rev() {
            b[j - 1] = &self.coeffs[j] + &b[j] * alpha;
        }
        MatPoly { n: self.n, coeffs: b }
    }

    /// The reflected polynomial `g(z) = f(conj z)^*`, again a polynomial with
    /// adjoint coefficient blocks.
    pub fn adjoint_reflect(&self) -> MatPoly {
        MatPoly { n: self.n, coeffs: self.coeffs.iter().map(|c| c.adjoint()).collect() }
    }

    pub fn add(&self, other: &MatPoly) -> Result<MatPoly> {
        if self.n != other.n {
            return Err(Error::Domain("polynomial dimensions differ".into()));
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![linalg::zeros(self.n); len];
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        MatPoly::new(self.n, coeffs)
    }

    pub fn sub(&self, other: &MatPoly) -> Result<MatPoly> {
        self.add(&other.scale(cr(-1.0)))
    }

    pub fn scale(&self, s: C64) -> MatPoly {
        MatPoly { n: self.n, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Matrix polynomial product (left factor is `self`).
    pub fn mul(&self, other: &MatPoly) -> Result<MatPoly> {
        if self.n != other.n {
            return Err(Error::Domain("polynomial dimensions differ".into()));
        }
        let mut coeffs = vec![linalg::zeros(self.n); self.degree() + other.degree() + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        MatPoly::new(self.n, coeffs)
    }

    /// Constant matrix times the polynomial: `M f(z)`.
    pub fn mul_matrix_left(&self, m: &CMat) -> MatPoly {
        MatPoly { n: self.n, coeffs: self.coeffs.iter().map(|c| m * c).collect() }
    }

    /// Polynomial times a constant matrix: `f(z) M`.
    pub fn mul_matrix_right(&self, m: &CMat) -> MatPoly {
        MatPoly { n: self.n, coeffs: self.coeffs.iter().map(|c| c * m).collect() }
    }

    /// Product with a scalar polynomial.
    pub fn mul_scalar_poly(&self, s: &[C64]) -> MatPoly {
        let mut coeffs = vec![linalg::zeros(self.n); self.degree() + s.len()];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, &b) in s.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        MatPoly::new(self.n, coeffs).unwrap()
    }

    /// Product with `(z - alpha)`.
    pub fn mul_linear(&self, alpha: C64) -> MatPoly {
        self.mul_scalar_poly(&[-alpha, linalg::ONE])
    }

    /// Largest coefficient-block distance to another polynomial.
    pub fn coeff_distance(&self, other: &MatPoly) -> f64 {
        let len = self.coeffs.len().max(other.coeffs.len());
        let z = linalg::zeros(self.n);
        (0..len)
            .map(|k| {
                let a = self.coeffs.get(k).unwrap_or(&z);
                let b = other.coeffs.get(k).unwrap_or(&z);
                frob(&(a - b))
            })
            .fold(0.0f64, f64::max)
    }
}

// ---------------------------------------------------------------------------

/// Hermitian idempotent with its rank.
#[derive(Clone, Debug)]
pub struct Projection {
    n: usize,
    m: CMat,
    r: usize,
}

impl Projection {
    /// Validates `M = M^*` and `M^2 = M` within `1e-8 (1 + ||M||)` and reads
    /// the rank off the singular values (idempotents have spectrum in {0, 1}).
    pub fn new(m: CMat) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::Domain("projection matrix must be square and nonempty".into()));
        }
        let scale = 1.0 + frob(&m);
        let herm = linalg::hermitian_defect(&m);
        if herm > 1e-8 * scale {
            return Err(Error::Domain(format!("projection is not Hermitian: ||M - M^*|| = {herm:.3e}")));
        }
        let idem = frob(&(&m * &m - &m));
        if idem > 1e-8 * scale {
            return Err(Error::Domain(format!("projection is not idempotent: ||M^2 - M|| = {idem:.3e}")));
        }
        let r = linalg::singular_values(&m).iter().filter(|&&s| s > 0.5).count();
        Ok(Projection { n, m, r })
    }

    /// Internal constructor for matrices known to be exact projections.
    pub(crate) fn from_parts_unchecked(m: CMat, r: usize) -> Self {
        let n = m.nrows();
        Projection { n, m, r }
    }

    pub fn zero(n: usize) -> Self {
        Projection { n, m: linalg::zeros(n), r: 0 }
    }

    pub fn full(n: usize) -> Self {
        Projection { n, m: linalg::identity(n), r: n }
    }

    /// Orthogonal projection onto the span of the given vectors.
    pub fn from_span(n: usize, vectors: &[CVec]) -> Result<Self> {
        for v in vectors {
            if v.len() != n {
                return Err(Error::Domain("span vector has wrong length".into()));
            }
        }
        // Modified Gram-Schmidt with drop tolerance.
        let mut basis: Vec<CVec> = Vec::new();
        for v in vectors {
            let mut w = v.clone();
            for q in &basis {
                let coeff = linalg::inner(&w, q);
                w -= q * coeff;
            }
            // Second pass for numerical orthogonality.
            for q in &basis {
                let coeff = linalg::inner(&w, q);
                w -= q * coeff;
            }
            let norm = w.norm();
            if norm > 1e-12 * (1.0 + v.norm()) {
                basis.push(w / cr(norm));
            }
        }
        let mut m = linalg::zeros(n);
        for q in &basis {
            m += q * q.adjoint();
        }
        Ok(Projection { n, m, r: basis.len() })
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The complementary projection `I - P`.
    pub fn complement(&self) -> Projection {
        Projection { n: self.n, m: linalg::identity(self.n) - &self.m, r: self.n - self.r }
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorMode {
    Plain,
    Canonical,
}

impl FactorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorMode::Plain => "plain",
            FactorMode::Canonical => "canonical",
        }
    }
}

/// Elementary factor `I - t P` (plain) or `(I - t P) exp(g_m(t) P)`
/// (canonical), `t = (z - z0)/(zk - z0)`.
#[derive(Clone, Debug)]
pub struct ElemFactor {
    z0: C64,
    zk: C64,
    p: Projection,
    m: u32,
    mode: FactorMode,
}

impl ElemFactor {
    pub fn new(z0: C64, zk: C64, p: Projection, m: u32, mode: FactorMode) -> Result<Self> {
        if (zk - z0).norm() <= 1e-12 * (1.0 + zk.norm().max(z0.norm())) {
            return Err(Error::Domain("factor zero zk must differ from the base point z0".into()));
        }
        if m == 0 {
            return Err(Error::Domain("exponential order m must be at least 1".into()));
        }
        Ok(ElemFactor { z0, zk, p, m, mode })
    }

    pub fn base(&self) -> C64 {
        self.z0
    }

    pub fn zero(&self) -> C64 {
        self.zk
    }

    pub fn projection(&self) -> &Projection {
        &self.p
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    pub fn mode(&self) -> FactorMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    fn t(&self, z: C64) -> C64 {
        (z - self.z0) / (self.zk - self.z0)
    }

    /// g_m(t) = sum_{j=1..m} t^j / j, the truncated -log(1-t) series.
    fn g(&self, t: C64) -> C64 {
        let mut acc = linalg::ZERO;
        let mut tj = linalg::ONE;
        for j in 1..=self.m {
            tj *= t;
            acc += tj / cr(j as f64);
        }
        acc
    }

    /// Scalar action of `B` on the range of `P`: `B(z) = (I - P) + val(z) P`.
    fn val(&self, z: C64) -> C64 {
        let t = self.t(z);
        match self.mode {
            FactorMode::Plain => linalg::ONE - t,
            FactorMode::Canonical => {
                let g = self.g(t);
                // Real arguments stay in real arithmetic: complex products
                // with an overflowed exp turn 0 * inf into NaN.
                if t.im == 0.0 && g.im == 0.0 {
                    cr((1.0 - t.re) * g.re.exp())
                } else {
                    (linalg::ONE - t) * linalg::cexp(g)
                }
            }
        }
    }

    // Both value and inverse are assembled as complement plus scaled
    // projection rather than identity plus update: when `val` (or `1/val` on
    // a canonical twist tail) drops below machine epsilon the update form
    // absorbs it into the unit entries and returns an exactly singular
    // matrix, while this form keeps the tiny scale intact.
    pub fn eval(&self, z: C64) -> CMat {
        let p = self.p.matrix();
        (linalg::identity(self.dim()) - p) + p * self.val(z)
    }

    /// Closed-form inverse `(I - P) + P / val(z)`; singular exactly at
    /// `z = zk`.
    pub fn eval_inverse(&self, z: C64) -> Result<CMat> {
        if (z - self.zk).norm() <= SINGULARITY_TOL {
            return Err(Error::Singularity { z, pole: self.zk });
        }
        let p = self.p.matrix();
        Ok((linalg::identity(self.dim()) - p) + p * linalg::recip(self.val(z)))
    }

    /// Determinant `val^r`.
    pub fn det(&self, z: C64) -> C64 {
        self.val(z).powu(self.p.rank() as u32)
    }

    /// Exact derivative. Both modes collapse to
    /// `B'(z) = -(t^m / (zk - z0)) e^{g_m(t)} P` with the convention that
    /// plain mode is the `m = 0`, `g = 0` case.
    pub fn derivative(&self) -> MatFun {
        let scale = -linalg::ONE / (self.zk - self.z0);
        match self.mode {
            FactorMode::Plain => {
                let base = MatPoly::constant(self.p.matrix() * scale).unwrap();
                MatFun::Poly(base)
            }
            FactorMode::Canonical => {
                let cinv = linalg::ONE / (self.zk - self.z0);
                // t(z)^m as a scalar polynomial in z.
                let tm: Vec<C64> = sp_power_of_linear(self.z0, self.m as usize)
                    .into_iter()
                    .map(|c| c * cinv.powu(self.m))
                    .collect();
                let base_poly = MatPoly::constant(self.p.matrix() * scale)
                    .unwrap()
                    .mul_scalar_poly(&tm);
                MatFun::ScalarExpTwist {
                    base: base_poly,
                    p: self.p.clone(),
                    coeffs: self.twist_coeffs(),
                }
            }
        }
    }

    /// Coefficients (in z) of `g_m(t(z))`.
    pub(crate) fn twist_coeffs(&self) -> Vec<C64> {
        let cinv = linalg::ONE / (self.zk - self.z0);
        let mut acc = vec![linalg::ZERO];
        for j in 1..=self.m as usize {
            let pow = sp_power_of_linear(self.z0, j);
            let s = cinv.powu(j as u32) / cr(j as f64);
            if acc.len() < pow.len() {
                acc.resize(pow.len(), linalg::ZERO);
            }
            for (k, &c) in pow.iter().enumerate() {
                acc[k] += c * s;
            }
        }
        acc
    }

    /// Reflected factor `z -> B(conj z)^*`: conjugate the base point and the
    /// zero, keep the projection (it is Hermitian) and the order.
    pub fn adjoint_reflect(&self) -> ElemFactor {
        ElemFactor {
            z0: self.z0.conj(),
            zk: self.zk.conj(),
            p: self.p.clone(),
            m: self.m,
            mode: self.mode,
        }
    }
}

// ---------------------------------------------------------------------------

/// Closed union of evaluable matrix functions.
///
/// `Poly`, `Factor`, `Inverse`, `Product`, and `ScalarExpTwist` are the
/// public surface; `Sum`, `BackShift`, and `Deriv` are internal plumbing that
/// keeps derivatives and divided differences inside the union (products
/// differentiate into sums, and divided differences of non-polynomials have
/// no simpler exact form).
#[derive(Clone, Debug)]
pub enum MatFun {
    Poly(MatPoly),
    Factor(ElemFactor),
    /// Inverse of an elementary factor; evaluation fails on its pole.
    Inverse(ElemFactor),
    /// Product in evaluation order: value is `f_0(z) f_1(z) ... f_k(z)`.
    Product(Vec<MatFun>),
    Sum(Vec<MatFun>),
    /// `(I + (e^{phi(z)} - 1) P) base(z)` with `phi` a scalar polynomial.
    ScalarExpTwist { base: MatPoly, p: Projection, coeffs: Vec<C64> },
    /// Divided difference `(f(z) - f(alpha)) / (z - alpha)` kept symbolic.
    BackShift { f: Box<MatFun>, alpha: C64 },
    /// Numerical derivative fallback for variants with no exact form.
    Deriv(Box<MatFun>),
}

fn factors_match(a: &ElemFactor, b: &ElemFactor) -> bool {
    a.mode == b.mode
        && a.m == b.m
        && a.z0 == b.z0
        && a.zk == b.zk
        && a.p.matrix() == b.p.matrix()
}

fn flatten_product(f: &MatFun, out: &mut Vec<MatFun>) {
    match f {
        MatFun::Product(fs) => fs.iter().for_each(|g| flatten_product(g, out)),
        other => out.push(other.clone()),
    }
}

fn rebuild_product(parts: Vec<MatFun>, dim: usize) -> MatFun {
    match parts.len() {
        0 => MatFun::identity(dim),
        1 => parts.into_iter().next().unwrap(),
        _ => MatFun::Product(parts),
    }
}

/// Drops the longest shared leading run of identical elementary factors (or
/// identical inverses) from two products. The values are unchanged wherever
/// the dropped run is invertible, but the reduced forms stay finite where a
/// twisted component and its mirror both overflow.
pub fn cancel_shared_prefix(a: &MatFun, b: &MatFun) -> (MatFun, MatFun) {
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    flatten_product(a, &mut fa);
    flatten_product(b, &mut fb);
    let mut k = 0;
    while k < fa.len() && k < fb.len() {
        let same = match (&fa[k], &fb[k]) {
            (MatFun::Factor(x), MatFun::Factor(y)) | (MatFun::Inverse(x), MatFun::Inverse(y)) => {
                factors_match(x, y)
            }
            _ => false,
        };
        if !same {
            break;
        }
        k += 1;
    }
    let (da, db) = (a.dim(), b.dim());
    (rebuild_product(fa.split_off(k), da), rebuild_product(fb.split_off(k), db))
}

impl MatFun {
    pub fn identity(n: usize) -> MatFun {
        MatFun::Poly(MatPoly::identity(n))
    }

    /// Flattens nested products and cancels adjacent mutually inverse
    /// elementary factors. Compositions like `N (N^{-1} A)` otherwise
    /// evaluate a twist against its reciprocal and overflow far from the
    /// axis where the reduced form is tame.
    pub fn simplified(&self) -> MatFun {
        let mut flat = Vec::new();
        flatten_product(self, &mut flat);
        let mut stack: Vec<MatFun> = Vec::new();
        for part in flat {
            let cancels = matches!(
                (stack.last(), &part),
                (Some(MatFun::Factor(a)), MatFun::Inverse(b))
                | (Some(MatFun::Inverse(a)), MatFun::Factor(b))
                    if factors_match(a, b)
            );
            if cancels {
                stack.pop();
            } else {
                stack.push(part);
            }
        }
        rebuild_product(stack, self.dim())
    }

    /// Product constructor; the empty product is the identity.
    pub fn product(n: usize, factors: Vec<MatFun>) -> Result<MatFun> {
        for f in &factors {
            if f.dim() != n {
                return Err(Error::Domain("product factors must share one dimension".into()));
            }
        }
        if factors.is_empty() {
            return Ok(MatFun::identity(n));
        }
        Ok(MatFun::Product(factors))
    }

    pub fn dim(&self) -> usize {
        match self {
            MatFun::Poly(p) => p.dim(),
            MatFun::Factor(f) | MatFun::Inverse(f) => f.dim(),
            MatFun::Product(fs) | MatFun::Sum(fs) => fs.first().map(|f| f.dim()).unwrap_or(0),
            MatFun::ScalarExpTwist { base, .. } => base.dim(),
            MatFun::BackShift { f, .. } => f.dim(),
            MatFun::Deriv(f) => f.dim(),
        }
    }

    pub fn eval(&self, z: C64) -> Result<CMat> {
        match self {
            MatFun::Poly(p) => Ok(p.eval(z)),
            MatFun::Factor(f) => Ok(f.eval(z)),
            MatFun::Inverse(f) => f.eval_inverse(z),
            MatFun::Product(fs) => {
                let n = self.dim();
                let mut acc = linalg::identity(n);
                for f in fs {
                    if f.dim() != n {
                        return Err(Error::Domain("product factors must share one dimension".into()));
                    }
                    acc = acc * f.eval(z)?;
                }
                Ok(acc)
            }
            MatFun::Sum(fs) => {
                let n = self.dim();
                let mut acc = linalg::zeros(n);
                for f in fs {
                    if f.dim() != n {
                        return Err(Error::Domain("sum terms must share one dimension".into()));
                    }
                    acc += f.eval(z)?;
                }
                Ok(acc)
            }
            MatFun::ScalarExpTwist { base, p, coeffs } => {
                // (I - P) b + e^phi P b, kept in two parts so a deeply
                // negative Re phi cannot round the twisted block to zero.
                let phi = sp_eval(coeffs, z);
                let b = base.eval(z);
                let pb = p.matrix() * &b;
                Ok((b - &pb) + pb * linalg::cexp(phi))
            }
            MatFun::BackShift { f, alpha } => {
                if (z - alpha).norm() >= DIVIDED_DIFF_SWITCH {
                    let num = f.eval(z)? - f.eval(*alpha)?;
                    Ok(num / (z - alpha))
                } else {
                    // Midpoint derivative: exact at z = alpha, O(|z - alpha|^2)
                    // nearby, continuous across the switch radius.
                    f.derivative().eval((z + alpha) * cr(0.5))
                }
            }
            MatFun::Deriv(f) => {
                // Fourth-order central difference.
                let h = 1e-4 * (1.0 + z.norm());
                let hh = cr(h);
                let f1 = f.eval(z + hh)?;
                let f2 = f.eval(z - hh)?;
                let f3 = f.eval(z + hh * cr(2.0))?;
                let f4 = f.eval(z - hh * cr(2.0))?;
                Ok(((f1 - f2) * cr(8.0) - (f3 - f4)) / cr(12.0 * h))
            }
        }
    }

    /// Evaluation that treats isolated singularities of inverse factors as
    /// removable: on a singularity hit, returns the average of four points on
    /// a circle of radius `h` around `z`, which agrees with the analytic
    /// value to O(h^4) when the product as a whole is regular at `z`.
    pub fn eval_analytic(&self, z: C64, h: f64) -> Result<CMat> {
        match self.eval(z) {
            Ok(m) => Ok(m),
            Err(Error::Singularity { .. }) => {
                let offsets = [cr(h), c(0.0, h), cr(-h), c(0.0, -h)];
                let mut acc = linalg::zeros(self.dim());
                for o in offsets {
                    acc += self.eval(z + o)?;
                }
                Ok(acc / cr(4.0))
            }
            Err(e) => Err(e),
        }
    }

    /// Exact derivative within the union. Polynomials and elementary factors
    /// differentiate in closed form; products use the product rule; divided
    /// differences fall back to a high-order numerical rule.
    pub fn derivative(&self) -> MatFun {
        match self {
            MatFun::Poly(p) => MatFun::Poly(p.derivative()),
            MatFun::Factor(f) => f.derivative(),
            MatFun::Inverse(f) => {
                // (B^{-1})' = -B^{-1} B' B^{-1}.
                let neg_deriv = f.derivative().negated();
                MatFun::Product(vec![MatFun::Inverse(f.clone()), neg_deriv, MatFun::Inverse(f.clone())])
            }
            MatFun::Product(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for i in 0..fs.len() {
                    let mut prod = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        prod.push(if i == j { f.derivative() } else { f.clone() });
                    }
                    terms.push(MatFun::Product(prod));
                }
                MatFun::Sum(terms)
            }
            MatFun::Sum(fs) => MatFun::Sum(fs.iter().map(|f| f.derivative()).collect()),
            MatFun::ScalarExpTwist { base, p, coeffs } => {
                // f = (I + (e^phi - 1)P) B  =>  f' = (I + (e^phi - 1)P)(phi' P B + B'),
                // using P(PB) = PB to reabsorb the twist.
                let phi_d = sp_derivative(coeffs);
                let pb = base.mul_matrix_left(p.matrix()).mul_scalar_poly(&phi_d);
                let new_base = pb.add(&base.derivative()).unwrap();
                MatFun::ScalarExpTwist { base: new_base, p: p.clone(), coeffs: coeffs.clone() }
            }
            MatFun::BackShift { .. } | MatFun::Deriv(_) => MatFun::Deriv(Box::new(self.clone())),
        }
    }

    /// Divided difference `(f(z) - f(alpha)) / (z - alpha)` with the
    /// removable singularity at `alpha` filled in by `f'(alpha)`. Exact
    /// synthetic division for polynomials, symbolic for the rest.
    pub fn divided_difference(&self, alpha: C64) -> MatFun {
        match self {
            MatFun::Poly(p) => MatFun::Poly(p.divided_difference(alpha)),
            other => MatFun::BackShift { f: Box::new(other.clone()), alpha },
        }
    }

    /// The function `g(z) = f(conj z)^*`, entire whenever `f` is.
    pub fn adjoint_reflect(&self) -> MatFun {
        match self {
            MatFun::Poly(p) => MatFun::Poly(p.adjoint_reflect()),
            MatFun::Factor(f) => MatFun::Factor(f.adjoint_reflect()),
            MatFun::Inverse(f) => MatFun::Inverse(f.adjoint_reflect()),
            MatFun::Product(fs) => {
                MatFun::Product(fs.iter().rev().map(|f| f.adjoint_reflect()).collect())
            }
            MatFun::Sum(fs) => MatFun::Sum(fs.iter().map(|f| f.adjoint_reflect()).collect()),
            MatFun::ScalarExpTwist { base, p, coeffs } => {
                // (T(cz) B(cz))^* = B^r(z) (I + (e^{conj phi(cz)} - 1) P),
                // a reflected base times a right twist; expressed as a product
                // with an identity-based left twist.
                let right_twist = MatFun::ScalarExpTwist {
                    base: MatPoly::identity(p.dim()),
                    p: p.clone(),
                    coeffs: sp_conj(coeffs),
                };
                MatFun::Product(vec![MatFun::Poly(base.adjoint_reflect()), right_twist])
            }
            MatFun::BackShift { f, alpha } => MatFun::BackShift {
                f: Box::new(f.adjoint_reflect()),
                alpha: alpha.conj(),
            },
            MatFun::Deriv(f) => MatFun::Deriv(Box::new(f.adjoint_reflect())),
        }
    }

    /// `-f`, staying inside the union.
    pub fn negated(self) -> MatFun {
        match self {
            MatFun::Poly(p) => MatFun::Poly(p.scale(cr(-1.0))),
            MatFun::Sum(fs) => MatFun::Sum(fs.into_iter().map(|f| f.negated()).collect()),
            MatFun::ScalarExpTwist { base, p, coeffs } => {
                MatFun::ScalarExpTwist { base: base.scale(cr(-1.0)), p, coeffs }
            }
            other => {
                let n = other.dim();
                let neg_id = MatPoly::constant(linalg::identity(n) * cr(-1.0)).unwrap();
                MatFun::Product(vec![MatFun::Poly(neg_id), other])
            }
        }
    }

    /// Attempts to view the function as a polynomial.
    pub fn as_poly(&self) -> Option<&MatPoly> {
        match self {
            MatFun::Poly(p) => Some(p),
            _ => None,
        }
    }
}
