//! Determinant polynomials, zero location, and singular-subspace projections
//! for matrix polynomials.
//!
//! Determinants are interpolated from evaluations at scaled roots of unity
//! (an inverse DFT), which is exact for polynomial data up to rounding and
//! avoids symbolic expansion. Zeros come from a block companion
//! linearization; when the leading coefficient is ill-conditioned the
//! companion pencil is solved by shift-and-invert with a deterministically
//! chosen shift, and eigenvalues mapped beyond `1/tol` are classified as
//! infinite. Nearby eigenvalues are merged into clusters whose multiplicity
//! is the cluster size and whose defect is the local cokernel dimension.

use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, C64};
use crate::matfun::{sp_derivative, sp_eval, MatPoly, Projection};

/// Default clustering radius scale: points merge when their distance is below
/// `radius * (1 + |z|)`.
pub const DEFAULT_CLUSTER_RADIUS: f64 = 1e-8;

/// Threshold beyond which a mapped companion eigenvalue counts as infinite.
const INFINITE_CUTOFF: f64 = 1e10;

/// A clustered zero of `det A` with its multiplicity and the dimension of the
/// cokernel of `A` at the cluster center (`1 <= defect <= mult` for honest
/// zeros; a Jordan block of size two has `mult = 2`, `defect = 1`).
#[derive(Clone, Debug)]
pub struct ZeroRecord {
    pub z: C64,
    pub mult: usize,
    pub defect: usize,
}

/// Numerical rank decision together with the evidence it was made on.
#[derive(Clone, Debug)]
pub struct RankReport {
    pub r: usize,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// The threshold actually applied: `sigma_r > tol >= sigma_{r+1}`.
    pub tol_used: f64,
}

/// Rank of a matrix with an optional explicit tolerance; the default is
/// `sigma_max * n * sqrt(eps)`.
pub fn rank_report(m: &CMat, tol: Option<f64>) -> RankReport {
    let sv = linalg::singular_values(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let n = m.nrows().max(m.ncols());
    let tol_used = tol.unwrap_or_else(|| linalg::default_rank_tol(sigma_max, n));
    let r = sv.iter().filter(|&&s| s > tol_used).count();
    RankReport { r, singular_values: sv, tol_used }
}

/// Determinant of a matrix polynomial as a scalar coefficient vector
/// (ascending powers), via evaluation at `n*d + 1` scaled roots of unity and
/// an inverse DFT. The zero polynomial comes back as a single zero
/// coefficient.
pub fn det_poly(a: &MatPoly) -> Vec<C64> {
    let n = a.dim();
    let d = a.degree();
    let big_n = n * d;
    if a.is_zero() {
        return vec![linalg::ZERO];
    }
    // Balance the sample radius against the coefficient spread so that the
    // Vandermonde system stays well conditioned.
    let c0 = linalg::frob(a.coeff(0));
    let cd = linalg::frob(a.coeff(d));
    let radius = if d == 0 {
        1.0
    } else {
        ((c0 + 1e-300) / (cd + 1e-300)).powf(1.0 / d as f64).clamp(0.5, 2.0)
    };
    let m = big_n + 1;
    let values: Vec<C64> = (0..m)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            linalg::det(&a.eval(C64::from_polar(radius, theta)))
        })
        .collect();
    let vmax = values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    // Inverse DFT in the unscaled variable first; trimming happens there so
    // the threshold is relative to the value scale, not amplified by
    // radius^{-k}.
    let mut hat: Vec<C64> = (0..m)
        .map(|k| {
            let mut acc = linalg::ZERO;
            for (j, v) in values.iter().enumerate() {
                let theta = -2.0 * std::f64::consts::PI * (j * k % m) as f64 / m as f64;
                acc += v * C64::from_polar(1.0, theta);
            }
            acc / cr(m as f64)
        })
        .collect();
    let tol = 1e-9 * vmax;
    while hat.len() > 1 && hat.last().map(|c| c.norm() <= tol).unwrap_or(false) {
        hat.pop();
    }
    hat.iter()
        .enumerate()
        .map(|(k, &c)| c / cr(radius.powi(k as i32)))
        .collect()
}

/// True when the determinant is numerically the zero polynomial, judged on
/// the value scale a nonsingular matrix of this size and coefficient norm
/// could produce.
fn det_identically_zero(a: &MatPoly, det: &[C64]) -> bool {
    let n = a.dim();
    let scale = 1.0 + a.max_coeff_norm();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let thresh = fact * scale.powi(n as i32) * 1e-13;
    det.iter().all(|c| c.norm() <= thresh)
}

fn block_companion_monic(a: &MatPoly) -> Result<CMat> {
    let n = a.dim();
    let d = a.degree();
    let cd_inv = linalg::inverse(a.coeff(d))
        .ok_or_else(|| Error::Numerical("leading coefficient unexpectedly singular".into()))?;
    let nd = n * d;
    let mut m = CMat::zeros(nd, nd);
    for i in 0..(d - 1) {
        for r in 0..n {
            m[(i * n + r, (i + 1) * n + r)] = linalg::ONE;
        }
    }
    for k in 0..d {
        let blk = &cd_inv * a.coeff(k) * cr(-1.0);
        for r in 0..n {
            for c in 0..n {
                m[((d - 1) * n + r, k * n + c)] = blk[(r, c)];
            }
        }
    }
    Ok(m)
}

/// Companion pencil (A_c, B_c) with `det(A_c - z B_c) = ± det A(z)` up to a
/// constant; `B_c` carries the leading coefficient so singular leading blocks
/// become infinite eigenvalues rather than breakdowns.
fn companion_pencil(a: &MatPoly) -> (CMat, CMat) {
    let n = a.dim();
    let d = a.degree();
    let nd = n * d;
    let mut ac = CMat::zeros(nd, nd);
    let mut bc = CMat::zeros(nd, nd);
    for i in 0..(d - 1) {
        for r in 0..n {
            ac[(i * n + r, (i + 1) * n + r)] = linalg::ONE;
            bc[(i * n + r, i * n + r)] = linalg::ONE;
        }
    }
    for k in 0..d {
        let blk = a.coeff(k);
        for r in 0..n {
            for c in 0..n {
                ac[((d - 1) * n + r, k * n + c)] = -blk[(r, c)];
            }
        }
    }
    let cd = a.coeff(d);
    for r in 0..n {
        for c in 0..n {
            bc[((d - 1) * n + r, (d - 1) * n + c)] = cd[(r, c)];
        }
    }
    (ac, bc)
}

/// Finite eigenvalues of the companion pencil by shift-and-invert. The shift
/// is chosen deterministically among the determinant sample points (largest
/// determinant magnitude first), so repeated runs agree bit for bit.
fn pencil_eigenvalues(a: &MatPoly) -> Result<Vec<C64>> {
    let (ac, bc) = companion_pencil(a);
    let n = a.dim();
    let d = a.degree();
    let m = n * d + 1;
    let c0 = linalg::frob(a.coeff(0));
    let cd = linalg::frob(a.coeff(d));
    let radius = ((c0 + 1e-300) / (cd + 1e-300)).powf(1.0 / d as f64).clamp(0.5, 2.0);
    let mut shifts: Vec<(f64, C64)> = (0..m)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            let p = C64::from_polar(radius, theta);
            (linalg::det(&a.eval(p)).norm(), p)
        })
        .collect();
    shifts.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    for (_, sigma) in shifts.iter().take(4) {
        let shifted = &ac - &bc * *sigma;
        if let Some(minv_b) = linalg::solve_mat(&shifted, &bc) {
            let theta_inf = 1e-10 / (1.0 + sigma.norm());
            let eig = linalg::eigenvalues(&minv_b)?;
            let finite: Vec<C64> = eig
                .into_iter()
                .filter(|th| th.norm() > theta_inf)
                .map(|th| sigma + linalg::ONE / th)
                .filter(|l| l.norm() <= INFINITE_CUTOFF)
                .collect();
            return Ok(finite);
        }
    }
    Err(Error::Numerical("no nonsingular shift found for the companion pencil".into()))
}

fn cluster_points(points: &[C64], radius: f64) -> Vec<Vec<C64>> {
    let k = points.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let scale = 1.0 + points[i].norm().max(points[j].norm());
            if (points[i] - points[j]).norm() <= radius * scale {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<C64>> = std::collections::BTreeMap::new();
    for i in 0..k {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(points[i]);
    }
    groups.into_values().collect()
}

/// Canonical ordering for reported zeros: modulus, then principal argument,
/// then lexicographic on (Re, Im).
pub(crate) fn canonical_order(a: C64, b: C64) -> std::cmp::Ordering {
    let key = |z: C64| (z.norm(), z.arg(), z.re, z.im);
    let (ka, kb) = (key(a), key(b));
    ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
}

/// All finite zeros of `det A` as clustered records.
///
/// Eigenvalues of the companion linearization are polished by one Newton step
/// on the interpolated determinant, merged within `cluster_radius * (1+|z|)`,
/// and reported at the cluster mean. Fails with [`Error::ZeroPolynomial`]
/// when the determinant vanishes identically.
pub fn zeros(a: &MatPoly, cluster_radius: f64) -> Result<Vec<ZeroRecord>> {
    let n = a.dim();
    let det = det_poly(a);
    if det_identically_zero(a, &det) {
        return Err(Error::ZeroPolynomial);
    }
    let d = a.degree();
    if d == 0 || det.len() == 1 {
        return Ok(Vec::new());
    }
    let cd = a.coeff(d);
    let sv = linalg::singular_values(cd);
    let well_conditioned = sv.last().copied().unwrap_or(0.0) > 1e-8 * sv.first().copied().unwrap_or(0.0);
    let raw = if well_conditioned {
        linalg::eigenvalues(&block_companion_monic(a)?)?
    } else {
        pencil_eigenvalues(a)?
    };
    // One Newton step on the interpolated determinant sharpens simple roots
    // without disturbing clusters. At a multiple root the derivative is pure
    // interpolation noise and the quotient can point anywhere, so a step is
    // only accepted when it demonstrably shrinks the determinant value.
    let dp = sp_derivative(&det);
    let polished: Vec<C64> = raw
        .into_iter()
        .map(|z| {
            let e = sp_eval(&det, z);
            let de = sp_eval(&dp, z);
            if de.norm() > 1e-300 {
                let step = e / de;
                if step.norm() <= 0.1 * (1.0 + z.norm()) {
                    let cand = z - step;
                    if sp_eval(&det, cand).norm() < e.norm() {
                        return cand;
                    }
                }
            }
            z
        })
        .collect();
    let mut records: Vec<ZeroRecord> = cluster_points(&polished, cluster_radius)
        .into_iter()
        .map(|members| {
            let mult = members.len();
            let mean = members.iter().sum::<C64>() / cr(mult as f64);
            let value = a.eval(mean);
            // Rank relative to the polynomial's magnitude nearby, not to the
            // (possibly uniformly tiny) value at the zero itself.
            let scale = linalg::op_norm(&value).max(local_scale(|z| Ok(a.eval(z)), mean));
            let rr = rank_report(&value, Some(linalg::default_rank_tol(scale, n)));
            let defect = (n - rr.r).clamp(1, mult.min(n));
            ZeroRecord { z: mean, mult, defect }
        })
        .collect();
    records.sort_by(|x, y| canonical_order(x.z, y.z));
    Ok(records)
}

/// Representative magnitude of a matrix function near `x`, probed off the
/// point itself so that a value vanishing at `x` still gets a sensible scale.
/// Rank decisions at zeros must be made relative to this, not to the (tiny)
/// value at the zero.
pub(crate) fn local_scale<F>(eval: F, x: C64) -> f64
where
    F: Fn(C64) -> Result<CMat>,
{
    let s = 0.5 * (1.0 + x.norm());
    let mut best = 0.0f64;
    for dz in [C64::new(0.0, s), C64::new(0.0, -s), C64::new(s, 0.0)] {
        if let Ok(m) = eval(x + dz) {
            best = best.max(linalg::op_norm(&m));
        }
    }
    best
}

/// Orthogonal projection onto the cokernel (left null space) of `M`: the span
/// of left singular vectors whose singular values are at most `tol`. By
/// construction `||P M|| <= tol * n`.
pub fn cokernel_projection(m: &CMat, tol: Option<f64>) -> Result<Projection> {
    cokernel_projection_capped(m, tol, usize::MAX)
}

/// [`cokernel_projection`] keeping at most `cap` directions, weakest singular
/// vectors first. The cap stops a deflation step from removing more rank than
/// the multiplicity it is accounting for.
pub(crate) fn cokernel_projection_capped(m: &CMat, tol: Option<f64>, cap: usize) -> Result<Projection> {
    // Left singular vectors beyond min(n, m.ncols()) never appear in the SVD;
    // for wide matrices that is fine (the cokernel lives inside the U range),
    // but tall matrices have extra cokernel directions with no singular value
    // attached. All uses here are square or wide.
    if m.nrows() > m.ncols() {
        return Err(Error::Domain("cokernel projection expects a square or wide matrix".into()));
    }
    let (u, sv, _) = linalg::svd_full(m)?;
    let n = m.nrows();
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol_used = tol.unwrap_or_else(|| linalg::default_rank_tol(sigma_max, n.max(m.ncols())));
    let mut idx: Vec<usize> = (0..sv.len().min(u.ncols())).filter(|&j| sv[j] <= tol_used).collect();
    idx.reverse();
    idx.truncate(cap);
    let mut proj = CMat::zeros(n, n);
    for &j in &idx {
        let col = u.column(j);
        proj += col * col.adjoint();
    }
    Ok(Projection::from_parts_unchecked(proj, idx.len()))
}

/// Orthogonal projection onto the (right) kernel of `M`: right singular
/// vectors with singular values at most `tol`, so `||M P|| <= tol * n`.
pub fn kernel_projection(m: &CMat, tol: Option<f64>) -> Result<Projection> {
    kernel_projection_capped(m, tol, usize::MAX)
}

/// [`kernel_projection`] keeping at most `cap` directions, weakest first.
pub(crate) fn kernel_projection_capped(m: &CMat, tol: Option<f64>, cap: usize) -> Result<Projection> {
    if m.ncols() > m.nrows() {
        return Err(Error::Domain("kernel projection expects a square or tall matrix".into()));
    }
    let (_, sv, v_t) = linalg::svd_full(m)?;
    let n = m.ncols();
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol_used = tol.unwrap_or_else(|| linalg::default_rank_tol(sigma_max, n.max(m.nrows())));
    let mut idx: Vec<usize> = (0..sv.len().min(v_t.nrows())).filter(|&j| sv[j] <= tol_used).collect();
    idx.reverse();
    idx.truncate(cap);
    let mut proj = CMat::zeros(n, n);
    for &j in &idx {
        let row = v_t.row(j);
        // Row j of V^H is conj(v_j)^T; the projector term is v_j v_j^H.
        let v = row.adjoint();
        proj += &v * v.adjoint();
    }
    Ok(Projection::from_parts_unchecked(proj, idx.len()))
}
