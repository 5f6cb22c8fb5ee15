//! Adaptive Gauss-Legendre quadrature over the real line.
//!
//! Integrals here are of vector-valued integrands against Lebesgue measure on
//! all of R. The strategy is panel Gauss-Legendre on a core window [-T, T]
//! (split at caller-supplied breakpoints such as real determinant zeros),
//! plus compactified tails: on |t| >= T the substitution u = 1/t turns the
//! tails into integrals of f(1/u)/u^2 over (0, 1/T], which panel rules handle
//! well for integrands decaying like t^{-2} or faster. The window is doubled
//! until two consecutive stages agree, so integrands that are not integrable
//! fail the budget instead of returning a silent wrong answer.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::CVec;

/// Tuning for the adaptive line quadrature.
#[derive(Clone, Debug)]
pub struct QuadConfig {
    /// Initial core half-width.
    pub t0: f64,
    /// Number of times the half-width may double before giving up.
    pub max_doublings: u32,
    /// Relative agreement required between consecutive stages.
    pub rel_tol: f64,
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { t0: 8.0, max_doublings: 12, rel_tol: 1e-6, nodes_per_panel: 32 }
    }
}

/// Absolute convergence floor added to the relative criterion so that
/// integrals whose true value is zero (annihilation integrals) terminate.
const ABS_TOL: f64 = 1e-10;

/// Converged line integral with diagnostics.
#[derive(Clone, Debug)]
pub struct LineIntegral {
    pub value: CVec,
    /// Doublings consumed before two stages agreed.
    pub doublings: u32,
    /// Final core half-width.
    pub half_width: f64,
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    // Three-term recurrence for P_n and its derivative.
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    cache.lock().unwrap().insert(n, (nodes.clone(), weights.clone()));
    (nodes, weights)
}

fn panel_integral<F>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64], dim: usize) -> Result<CVec>
where
    F: Fn(f64) -> Result<CVec>,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = CVec::zeros(dim);
    for (x, w) in nodes.iter().zip(weights) {
        let t = mid + half * x;
        let v = f(t)?;
        if v.len() != dim {
            return Err(Error::Domain("integrand dimension changed between evaluations".into()));
        }
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFiniteIntegrand { t });
        }
        acc += v * crate::linalg::cr(half * w);
    }
    Ok(acc)
}

/// Integral over [a, b], subdividing into panels of width at most
/// `max_width` and splitting additionally at the supplied breakpoints.
fn segment_integral<F>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    max_width: f64,
    nodes: &[f64],
    weights: &[f64],
    dim: usize,
) -> Result<CVec>
where
    F: Fn(f64) -> Result<CVec>,
{
    let mut cuts = vec![a, b];
    for &p in breakpoints {
        if p > a + 1e-12 && p < b - 1e-12 {
            cuts.push(p);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut acc = CVec::zeros(dim);
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo < 1e-14 {
            continue;
        }
        let parts = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / parts as f64;
        for j in 0..parts {
            let pa = lo + step * j as f64;
            let pb = if j + 1 == parts { hi } else { pa + step };
            acc += panel_integral(f, pa, pb, nodes, weights, dim)?;
        }
    }
    Ok(acc)
}

/// Both compactified tails |t| >= big_t. Substituting u = 1/t maps each tail
/// onto (0, 1/big_t] with integrand f(±1/u)/u^2.
fn tail_integral<F>(f: &F, big_t: f64, nodes: &[f64], weights: &[f64], dim: usize) -> Result<CVec>
where
    F: Fn(f64) -> Result<CVec>,
{
    let ub = 1.0 / big_t;
    let mut acc = CVec::zeros(dim);
    for sign in [1.0f64, -1.0] {
        let g = |u: f64| -> Result<CVec> {
            let t = sign / u;
            Ok(f(t)? * crate::linalg::cr(1.0 / (u * u)))
        };
        // Geometric panels toward u = 0 resolve slowly decaying tails; the
        // innermost panel reaches u = 0 (nodes stay interior, so t = 1/u is
        // always finite).
        let mut edges = vec![ub];
        let mut e = ub;
        for _ in 0..6 {
            e *= 0.25;
            edges.push(e);
        }
        edges.push(0.0);
        for pair in edges.windows(2) {
            acc += panel_integral(&g, pair[1], pair[0], nodes, weights, dim)?;
        }
    }
    Ok(acc)
}

/// Adaptive integral of `f` over the whole real line.
///
/// `dim` is the length of the integrand vector; scalar integrands use length
/// one. `breakpoints` mark locations where the integrand is only piecewise
/// smooth (panel edges are placed there; nodes themselves stay interior).
/// Fails with [`Error::Convergence`] when consecutive window doublings keep
/// disagreeing, which is the designed outcome for non-integrable inputs.
pub fn integrate_line<F>(dim: usize, f: F, breakpoints: &[f64], q: &QuadConfig) -> Result<LineIntegral>
where
    F: Fn(f64) -> Result<CVec>,
{
    if q.nodes_per_panel < 2 || q.t0 <= 0.0 {
        return Err(Error::Domain("quadrature configuration must have t0 > 0 and at least 2 nodes".into()));
    }
    let (nodes, weights) = gauss_legendre(q.nodes_per_panel);
    let mut t = q.t0;
    // Core accumulates incrementally: each stage adds the two new shells.
    let mut core = segment_integral(&f, -t, t, breakpoints, 2.0, &nodes, &weights, dim)?;
    let mut prev: Option<CVec> = None;
    let mut marginal = f64::INFINITY;
    for stage in 0..=q.max_doublings {
        let total = &core + tail_integral(&f, t, &nodes, &weights, dim)?;
        if let Some(p) = &prev {
            marginal = (&total - p).norm();
            if marginal <= q.rel_tol * total.norm() + ABS_TOL {
                return Ok(LineIntegral { value: total, doublings: stage, half_width: t });
            }
        }
        prev = Some(total);
        if stage == q.max_doublings {
            break;
        }
        // Widen: shells [t, 2t] and [-2t, -t] with width graded like |t|.
        let shell_width = (t / 4.0).max(2.0);
        core += segment_integral(&f, t, 2.0 * t, breakpoints, shell_width, &nodes, &weights, dim)?;
        core += segment_integral(&f, -2.0 * t, -t, breakpoints, shell_width, &nodes, &weights, dim)?;
        t *= 2.0;
    }
    Err(Error::Convergence { doublings: q.max_doublings, marginal })
}

/// Scalar convenience wrapper around [`integrate_line`].
pub fn integrate_line_scalar<F>(f: F, breakpoints: &[f64], q: &QuadConfig) -> Result<(num_complex::Complex64, LineIntegral)>
where
    F: Fn(f64) -> Result<num_complex::Complex64>,
{
    let wrapped = |t: f64| -> Result<CVec> { Ok(CVec::from_element(1, f(t)?)) };
    let li = integrate_line(1, wrapped, breakpoints, q)?;
    let v = li.value[0];
    Ok((v, li))
}
