//! Deflation of zeros and factorization into elementary factors.
//!
//! One deflation step removes the zero of `A` at `x` seen from a base point
//! `z0` where `A` is invertible. With `P` the orthogonal projection onto the
//! cokernel of `A(x)` and `R_x A` the divided difference at `x`, the left
//! residual
//!
//! `E2(z) = A(z) - (z - z0) P (R_x A)(z)`
//!
//! satisfies `A = B E2` exactly for the plain factor `B = I - t P`,
//! `t = (z - z0)/(x - z0)`; the computation is polynomial arithmetic, no
//! quadrature involved. Canonical mode multiplies the factor by
//! `exp(g_m(t) P)` to tame products with unboundedly many factors, so its
//! residual picks up the inverse twist `exp(-g_m(t) P)` and stops being a
//! polynomial; residuals are then kept as lazy products
//! `B_k^{-1} ... B_1^{-1} A` and evaluated on demand (a four-point circle
//! average fills the removable points at previously deflated zeros).
//!
//! Partial products of canonical factors with zeros `z_k` converge locally
//! once `sum_k |(z - z0)/(z_k - z0)|^{k+1}` does; the quantitative form used
//! here bounds a tail of the product by `exp(mu^{n+1}/(1-mu)) - 1` per factor
//! with `mu = |(z - z0)/(z_k - z0)| < 1`.

use crate::debranges::{validate_h1, DBOperator, H1GridSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, frob, CMat, C64, Lcg};
use crate::matfun::{ElemFactor, FactorMode, MatFun, MatPoly, Projection};
use crate::spectral::{self, canonical_order, cokernel_projection, det_poly, kernel_projection, zeros};

/// Default absolute imaginary-part tolerance for classifying a zero as real.
pub const REAL_AXIS_TOL: f64 = 1e-8;

/// Relative invertibility threshold used for residuals and base points.
pub const INVERTIBILITY_RATIO: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Result of a global factorization: `A = B_1 ... B_K E` (left) or
/// `A = E B_K ... B_1` (right), with `factors = [B_1, ..., B_K]` in deflation
/// order and `E` the invertible-at-the-old-zeros residual.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub side: Side,
    pub mode: FactorMode,
    pub base: C64,
    pub factors: Vec<ElemFactor>,
    pub residual: MatFun,
}

impl Factorization {
    /// Value of the full product (factors and residual in the order dictated
    /// by the side).
    pub fn reconstruct(&self, z: C64) -> Result<CMat> {
        let n = self.residual.dim();
        let mut acc = linalg::identity(n);
        match self.side {
            Side::Left => {
                for b in &self.factors {
                    acc = acc * b.eval(z);
                }
                Ok(acc * self.residual.eval_analytic(z, analytic_radius(z, &self.zero_locations()))?)
            }
            Side::Right => {
                for b in self.factors.iter().rev() {
                    acc = acc * b.eval(z);
                }
                Ok(self.residual.eval_analytic(z, analytic_radius(z, &self.zero_locations()))? * acc)
            }
        }
    }

    fn zero_locations(&self) -> Vec<C64> {
        self.factors.iter().map(|b| b.zero()).collect()
    }

    /// Largest relative reconstruction error against `a` over the points.
    pub fn verify_against(&self, a: &MatPoly, points: &[C64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &z in points {
            let lhs = self.reconstruct(z)?;
            let rhs = a.eval(z);
            let denom = frob(&rhs).max(1.0);
            worst = worst.max(frob(&(&lhs - &rhs)) / denom);
        }
        Ok(worst)
    }

    /// Smallest residual invertibility ratio sigma_min/sigma_max over the
    /// deflated zero locations.
    pub fn residual_invertibility(&self) -> Result<f64> {
        let mut worst = f64::INFINITY;
        let locs = self.zero_locations();
        for &x in &locs {
            let m = self.residual.eval_analytic(x, analytic_radius(x, &locs))?;
            let sv = linalg::singular_values(&m);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            worst = worst.min(if smax > 0.0 { smin / smax } else { 0.0 });
        }
        Ok(worst)
    }

    /// Deterministic verification grid: a golden-angle disk around the base
    /// point, wide enough to enclose every deflated zero.
    pub fn default_grid(&self, count: usize) -> Vec<C64> {
        let reach = self
            .zero_locations()
            .iter()
            .map(|z| (z - self.base).norm())
            .fold(1.0f64, f64::max);
        linalg::spiral_grid(self.base, 2.0 * reach, count)
    }
}

/// Circle-average radius for evaluating lazy residuals near removed zeros:
/// small against the spacing of the removed zeros, large against rounding.
fn analytic_radius(z: C64, locations: &[C64]) -> f64 {
    let mut h = 1e-4 * (1.0 + z.norm());
    for &y in locations {
        let d = (z - y).norm();
        if d > 1e-12 {
            h = h.min(d / 8.0);
        }
    }
    h.max(1e-9 * (1.0 + z.norm()))
}

/// Exponential tail bound `exp(mu^{n+1}/(1-mu)) - 1` for truncating a
/// canonical product after `n` factors; decreasing in `n`, domain `0 <= mu < 1`.
#[derive(Clone, Copy, Debug)]
pub struct TailBound {
    pub mu: f64,
    pub n: u32,
    pub bound: f64,
}

pub fn truncation_bound(mu: f64, n: u32) -> Result<TailBound> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Domain(format!("tail bound requires 0 <= mu < 1, got {mu}")));
    }
    // exp_m1 keeps the bound meaningful when the exponent underflows exp to 1.
    let bound = (mu.powi(n as i32 + 1) / (1.0 - mu)).exp_m1();
    Ok(TailBound { mu, n, bound })
}

/// Value at `z` of the partial product `G_n(z) = B_1(z) ... B_n(z)` of
/// canonical factors at the given (zero, projection) data, where factor `k`
/// carries exponential order `m = k`.
pub fn partial_product(
    data: &[(C64, Projection)],
    z0: C64,
    up_to: usize,
    z: C64,
) -> Result<CMat> {
    if up_to > data.len() {
        return Err(Error::Domain(format!(
            "partial product of {up_to} factors requested, only {} available",
            data.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::Domain("partial product needs at least one factor".into()));
    }
    let n = data[0].1.dim();
    let mut acc = linalg::identity(n);
    for (k, (zk, p)) in data.iter().take(up_to).enumerate() {
        let b = ElemFactor::new(z0, *zk, p.clone(), (k + 1) as u32, FactorMode::Canonical)?;
        acc = acc * b.eval(z);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Single deflation steps.

fn invertibility_ratio(m: &CMat) -> f64 {
    let sv = linalg::singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax > 0.0 {
        smin / smax
    } else {
        0.0
    }
}

/// Exact plain-mode left residual `A - (z - z0) P R_x A`.
fn plain_residual_left(a: &MatPoly, x: C64, z0: C64, p: &Projection) -> MatPoly {
    let r = a.divided_difference(x);
    let term = r.mul_matrix_left(p.matrix()).mul_linear(z0);
    a.sub(&term).expect("dimensions agree")
}

/// Exact plain-mode right residual `A - (R_x A) Q (z - z0)`.
fn plain_residual_right(a: &MatPoly, x: C64, z0: C64, q: &Projection) -> MatPoly {
    let r = a.divided_difference(x);
    let term = r.mul_matrix_right(q.matrix()).mul_linear(z0);
    a.sub(&term).expect("dimensions agree")
}

/// Checks that `z0` is usable and `x1` really is a zero; returns the value at
/// `x1` with the rank tolerance to judge it by. The tolerance is relative to
/// the polynomial's magnitude near `x1`: a scalar factor like `z - 1`
/// evaluates to something uniformly tiny at its zero, and a tolerance
/// relative to that tiny value would never flag it as singular.
fn check_deflation_preconditions(a: &MatPoly, x1: C64, z0: C64) -> Result<(CMat, f64)> {
    let at_base = a.eval(z0);
    if invertibility_ratio(&at_base) <= INVERTIBILITY_RATIO {
        return Err(Error::BasePointSingular { z0 });
    }
    let at_zero = a.eval(x1);
    let scale = linalg::op_norm(&at_zero).max(spectral::local_scale(|z| Ok(a.eval(z)), x1));
    let tol = linalg::default_rank_tol(scale, a.dim());
    let smin = linalg::sigma_min(&at_zero);
    if smin > tol {
        return Err(Error::NotAZero { z: x1, ratio: if scale > 0.0 { smin / scale } else { 0.0 } });
    }
    Ok((at_zero, tol))
}

/// Removes the zero of `A` at `x1` by one left elementary factor (order 1).
/// Returns the factor and the residual: a polynomial in plain mode, an
/// exponential twist of one in canonical mode.
pub fn deflate_left(
    a: &MatPoly,
    x1: C64,
    z0: C64,
    mode: FactorMode,
) -> Result<(ElemFactor, MatFun)> {
    let (at_zero, tol) = check_deflation_preconditions(a, x1, z0)?;
    let p = cokernel_projection(&at_zero, Some(tol))?;
    let b = ElemFactor::new(z0, x1, p.clone(), 1, mode)?;
    let e2_plain = plain_residual_left(a, x1, z0, &p);
    let residual = match mode {
        FactorMode::Plain => MatFun::Poly(e2_plain),
        FactorMode::Canonical => {
            // B_canonical = B_plain exp(g P), so the residual gains exp(-g P).
            let coeffs: Vec<C64> = b.twist_coeffs().into_iter().map(|c| -c).collect();
            MatFun::ScalarExpTwist { base: e2_plain, p, coeffs }
        }
    };
    Ok((b, residual))
}

/// Mirror image of [`deflate_left`]: kernel projection, factor on the right.
pub fn deflate_right(
    a: &MatPoly,
    x1: C64,
    z0: C64,
    mode: FactorMode,
) -> Result<(MatFun, ElemFactor)> {
    let (at_zero, tol) = check_deflation_preconditions(a, x1, z0)?;
    let q = kernel_projection(&at_zero, Some(tol))?;
    let b = ElemFactor::new(z0, x1, q.clone(), 1, mode)?;
    let e2_plain = plain_residual_right(a, x1, z0, &q);
    let residual = match mode {
        FactorMode::Plain => MatFun::Poly(e2_plain),
        FactorMode::Canonical => {
            let coeffs: Vec<C64> = b.twist_coeffs().into_iter().map(|c| -c).collect();
            let right_twist = MatFun::ScalarExpTwist {
                base: MatPoly::identity(q.dim()),
                p: q,
                coeffs,
            };
            MatFun::Product(vec![MatFun::Poly(e2_plain), right_twist])
        }
    };
    Ok((residual, b))
}

// ---------------------------------------------------------------------------
// Global factorization.

/// Lazy residual `B_k^{-1} ... B_1^{-1} A` (left) or `A B_1^{-1} ... B_k^{-1}`
/// (right).
fn lazy_residual(a: &MatPoly, factors: &[ElemFactor], side: Side) -> MatFun {
    if factors.is_empty() {
        return MatFun::Poly(a.clone());
    }
    match side {
        Side::Left => {
            let mut parts: Vec<MatFun> =
                factors.iter().rev().map(|b| MatFun::Inverse(b.clone())).collect();
            parts.push(MatFun::Poly(a.clone()));
            MatFun::Product(parts)
        }
        Side::Right => {
            let mut parts = vec![MatFun::Poly(a.clone())];
            parts.extend(factors.iter().map(|b| MatFun::Inverse(b.clone())));
            MatFun::Product(parts)
        }
    }
}

fn order_records(mut records: Vec<spectral::ZeroRecord>, z0: C64) -> Vec<spectral::ZeroRecord> {
    records.sort_by(|a, b| canonical_order(a.z - z0, b.z - z0));
    records
}

struct DeflationLoop {
    factors: Vec<ElemFactor>,
}

/// Factors every zero of `A` out toward elementary factors anchored at `z0`.
/// Zeros are visited nearest-to-base first; each location is revisited until
/// the running residual is invertible there, so higher multiplicities shed
/// one cokernel's worth of rank per pass. Canonical mode numbers the factors
/// `m = 1, 2, ...` in deflation order.
pub fn factor_global(a: &MatPoly, z0: C64, side: Side, mode: FactorMode) -> Result<Factorization> {
    if invertibility_ratio(&a.eval(z0)) <= INVERTIBILITY_RATIO {
        return Err(Error::BasePointSingular { z0 });
    }
    let records = order_records(zeros(a, spectral::DEFAULT_CLUSTER_RADIUS)?, z0);
    let budget = det_poly(a).len() - 1;
    let state = run_deflation(a, &records, z0, side, mode, budget)?;
    let residual = match mode {
        FactorMode::Plain => {
            // Rebuild the exact polynomial chain (run_deflation already did;
            // recompute here from the factors for a single code path).
            let mut e = a.clone();
            for b in &state.factors {
                e = match side {
                    Side::Left => plain_residual_left(&e, b.zero(), z0, b.projection()),
                    Side::Right => plain_residual_right(&e, b.zero(), z0, b.projection()),
                };
            }
            MatFun::Poly(e)
        }
        FactorMode::Canonical => lazy_residual(a, &state.factors, side),
    };
    Ok(Factorization { side, mode, base: z0, factors: state.factors, residual })
}

fn run_deflation(
    a: &MatPoly,
    records: &[spectral::ZeroRecord],
    z0: C64,
    side: Side,
    mode: FactorMode,
    budget: usize,
) -> Result<DeflationLoop> {
    let n = a.dim();
    let locations: Vec<C64> = records.iter().map(|r| r.z).collect();
    let mut factors: Vec<ElemFactor> = Vec::new();
    let mut plain_residual = a.clone();
    let mut deflated = 0usize;
    for rec in records {
        let x = rec.z;
        // Every step removes exactly its projection rank from the local
        // determinant order, so the multiplicity is the step budget.
        let mut removed = 0usize;
        while removed < rec.mult {
            let remaining = (rec.mult - removed).min(n);
            let (value, scale) = match mode {
                FactorMode::Plain => (
                    plain_residual.eval(x),
                    spectral::local_scale(|z| Ok(plain_residual.eval(z)), x),
                ),
                FactorMode::Canonical => {
                    let fun = lazy_residual(a, &factors, side);
                    (
                        fun.eval_analytic(x, analytic_radius(x, &locations))?,
                        spectral::local_scale(|z| fun.eval(z), x),
                    )
                }
            };
            let tol = linalg::default_rank_tol(linalg::op_norm(&value).max(scale), n);
            let p = match side {
                Side::Left => spectral::cokernel_projection_capped(&value, Some(tol), remaining)?,
                Side::Right => spectral::kernel_projection_capped(&value, Some(tol), remaining)?,
            };
            if p.rank() == 0 {
                return Err(Error::Numerical(format!(
                    "residual is not singular at the listed zero {x} (multiplicity {} left)",
                    rec.mult - removed
                )));
            }
            deflated += p.rank();
            if deflated > budget {
                return Err(Error::IterationLimit { deflated, bound: budget });
            }
            let order = match mode {
                FactorMode::Plain => 1,
                FactorMode::Canonical => (factors.len() + 1) as u32,
            };
            let b = ElemFactor::new(z0, x, p.clone(), order, mode)?;
            if mode == FactorMode::Plain {
                plain_residual = match side {
                    Side::Left => plain_residual_left(&plain_residual, x, z0, &p),
                    Side::Right => plain_residual_right(&plain_residual, x, z0, &p),
                };
            }
            factors.push(b);
            removed += p.rank();
        }
    }
    Ok(DeflationLoop { factors })
}

// ---------------------------------------------------------------------------
// Real-axis restricted factorization.

/// Chooses a base point where `A` is comfortably invertible: the candidates
/// `0, 1, -1, i, -i` first, then deterministic pseudo-random points.
fn choose_base(ratio_at: impl Fn(C64) -> f64) -> Result<C64> {
    let candidates = [
        linalg::ZERO,
        cr(1.0),
        cr(-1.0),
        linalg::c(0.0, 1.0),
        linalg::c(0.0, -1.0),
    ];
    let mut best = (f64::NEG_INFINITY, linalg::ZERO);
    for &c in &candidates {
        let r = ratio_at(c);
        if r > best.0 {
            best = (r, c);
        }
    }
    if best.0 > INVERTIBILITY_RATIO {
        return Ok(best.1);
    }
    let mut rng = Lcg::new(0xD1CE_BA5E);
    for _ in 0..64 {
        let z = rng.next_complex(2.0);
        if ratio_at(z) > INVERTIBILITY_RATIO {
            return Ok(z);
        }
    }
    Err(Error::BasePointSingular { z0: best.1 })
}

/// Deflates only the real-axis zeros of `A` (those with `|Im z| <=
/// real_axis_tol`, snapped onto the axis), leaving a residual with no real
/// zeros. The base point is chosen automatically.
pub fn factor_real_with(a: &MatPoly, mode: FactorMode, real_axis_tol: f64) -> Result<Factorization> {
    let records = zeros(a, spectral::DEFAULT_CLUSTER_RADIUS)?;
    let z0 = choose_base(|z| invertibility_ratio(&a.eval(z)))?;
    let real_records: Vec<spectral::ZeroRecord> = records
        .into_iter()
        .filter(|r| r.z.im.abs() <= real_axis_tol)
        .map(|r| spectral::ZeroRecord { z: cr(r.z.re), ..r })
        .collect();
    let real_records = order_records(real_records, z0);
    let budget = det_poly(a).len() - 1;
    let state = run_deflation(a, &real_records, z0, Side::Left, mode, budget)?;
    let residual = match mode {
        FactorMode::Plain => {
            let mut e = a.clone();
            for b in &state.factors {
                e = plain_residual_left(&e, b.zero(), z0, b.projection());
            }
            MatFun::Poly(e)
        }
        FactorMode::Canonical => lazy_residual(a, &state.factors, Side::Left),
    };
    Ok(Factorization { side: Side::Left, mode, base: z0, factors: state.factors, residual })
}

/// [`factor_real_with`] at the default axis tolerance.
pub fn factor_real(a: &MatPoly, mode: FactorMode) -> Result<Factorization> {
    factor_real_with(a, mode, REAL_AXIS_TOL)
}

// ---------------------------------------------------------------------------
// Joint factorization of a pair.

/// Factors the common real zeros out of an admissible pair: returns `N` and a
/// zero-free-on-the-axis pair `E0` with `E_pm = N E0_pm`. The same elementary
/// factor divides both components, which is possible exactly because their
/// cokernel ranges agree at common real zeros; a disagreement surfaces as
/// [`Error::RangeMismatch`]. The pair must pass hypothesis validation first.
pub fn factor_joint(e: &DBOperator, mode: FactorMode) -> Result<(MatFun, DBOperator)> {
    let report = validate_h1(e, &H1GridSpec::default(), 1e-8)?;
    if !report.pass() {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
        return Err(Error::Domain(format!(
            "pair fails hypothesis validation ({}); joint factorization undefined",
            names.join(", ")
        )));
    }
    let (em, ep) = e
        .poly_components()
        .map(|(m, p)| (m.clone(), p.clone()))
        .ok_or_else(|| Error::Domain("joint factorization requires polynomial components".into()))?;
    let n = ep.dim();
    let real_of = |p: &MatPoly| -> Result<Vec<(f64, usize)>> {
        Ok(zeros(p, spectral::DEFAULT_CLUSTER_RADIUS)?
            .iter()
            .filter(|r| r.z.im.abs() <= REAL_AXIS_TOL * (1.0 + r.z.re.abs()))
            .map(|r| (r.z.re, r.mult))
            .collect())
    };
    let rp = real_of(&ep)?;
    let rm = real_of(&em)?;
    // Common real zeros with the shared multiplicity, paired within the
    // matching radius.
    let mut common: Vec<(f64, usize)> = Vec::new();
    for &(x, mx) in &rp {
        if let Some(&(y, my)) = rm
            .iter()
            .find(|&&(y, _)| (x - y).abs() <= 1e-6 * (1.0 + x.abs()))
        {
            common.push((0.5 * (x + y), mx.min(my)));
        }
    }
    common.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    common.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-9 * (1.0 + a.0.abs()));
    let z0 = choose_base(|z| {
        invertibility_ratio(&ep.eval(z)).min(invertibility_ratio(&em.eval(z)))
    })?;
    common.sort_by(|a, b| canonical_order(cr(a.0) - z0, cr(b.0) - z0));
    let locations: Vec<C64> = common.iter().map(|&(x, _)| cr(x)).collect();

    let budget = (det_poly(&ep).len() - 1).min(det_poly(&em).len() - 1);
    let mut factors: Vec<ElemFactor> = Vec::new();
    let mut plus_poly = ep.clone();
    let mut minus_poly = em.clone();
    let mut deflated = 0usize;
    for &(xr, mult) in &common {
        let x = cr(xr);
        let mut removed = 0usize;
        while removed < mult {
            let remaining = (mult - removed).min(n);
            let (mp, mm, scale_p, scale_m) = match mode {
                FactorMode::Plain => (
                    plus_poly.eval(x),
                    minus_poly.eval(x),
                    spectral::local_scale(|z| Ok(plus_poly.eval(z)), x),
                    spectral::local_scale(|z| Ok(minus_poly.eval(z)), x),
                ),
                FactorMode::Canonical => {
                    let h = analytic_radius(x, &locations);
                    let fp = lazy_residual(&ep, &factors, Side::Left);
                    let fm = lazy_residual(&em, &factors, Side::Left);
                    (
                        fp.eval_analytic(x, h)?,
                        fm.eval_analytic(x, h)?,
                        spectral::local_scale(|z| fp.eval(z), x),
                        spectral::local_scale(|z| fm.eval(z), x),
                    )
                }
            };
            let tol_p = linalg::default_rank_tol(linalg::op_norm(&mp).max(scale_p), n);
            let tol_m = linalg::default_rank_tol(linalg::op_norm(&mm).max(scale_m), n);
            // Range agreement: the individual cokernels must coincide.
            let pi_p = spectral::cokernel_projection_capped(&mp, Some(tol_p), remaining)?;
            let pi_m = spectral::cokernel_projection_capped(&mm, Some(tol_m), remaining)?;
            let mismatch = frob(&(pi_p.matrix() - pi_m.matrix()));
            if mismatch > 1e-6 {
                return Err(Error::RangeMismatch { x, mismatch });
            }
            // Shared projection: complement of the joint column span.
            let mut stacked = CMat::zeros(n, 2 * n);
            stacked.view_mut((0, 0), (n, n)).copy_from(&mp);
            stacked.view_mut((0, n), (n, n)).copy_from(&mm);
            let p =
                spectral::cokernel_projection_capped(&stacked, Some(tol_p.max(tol_m)), remaining)?;
            if p.rank() == 0 {
                return Err(Error::RangeMismatch { x, mismatch });
            }
            deflated += p.rank();
            if deflated > budget {
                return Err(Error::IterationLimit { deflated, bound: budget });
            }
            let order = match mode {
                FactorMode::Plain => 1,
                FactorMode::Canonical => (factors.len() + 1) as u32,
            };
            let b = ElemFactor::new(z0, x, p.clone(), order, mode)?;
            if mode == FactorMode::Plain {
                plus_poly = plain_residual_left(&plus_poly, x, z0, &p);
                minus_poly = plain_residual_left(&minus_poly, x, z0, &p);
            }
            factors.push(b);
            removed += p.rank();
        }
    }
    let n_fun = MatFun::product(n, factors.iter().map(|b| MatFun::Factor(b.clone())).collect())?;
    let e0 = match mode {
        FactorMode::Plain => DBOperator::from_polys(minus_poly, plus_poly)?,
        FactorMode::Canonical => DBOperator::new(
            lazy_residual(&em, &factors, Side::Left),
            lazy_residual(&ep, &factors, Side::Left),
        )?,
    };
    Ok((n_fun, e0))
}
