//! Pairs of matrix entire functions, their reproducing kernels, and the
//! analytic checks that make a pair usable.
//!
//! A pair `(E_minus, E_plus)` of n-by-n entire functions is admissible when
//! `E_plus` is invertible on the open upper half plane, `E_minus` on the open
//! lower one, and `chi = E_plus^{-1} E_minus` is contractive above the axis
//! and unitary on it. The associated space consists of n-vector entire
//! functions with norm `||f||^2 = integral <E_plus(t)^{-1} f(t), E_plus(t)^{-1} f(t)> dt`
//! and reproducing kernel
//!
//! `K_w(z) = (E_plus(z) E_plus(w)^* - E_minus(z) E_minus(w)^*) / (-2 pi i (z - conj w))`,
//!
//! with the confluent value `(E_plus'(conj w) E_plus(w)^* - E_minus'(conj w) E_minus(w)^*) / (-2 pi i)`
//! filling the removable point `z = conj w`. Three pointwise identities tie
//! the pair together: positivity of `E_plus E_plus^* - E_minus E_minus^*`
//! above the axis, its vanishing on the axis, and the reflected cancellation
//! `E_plus(z) E_plus(conj z)^* = E_minus(z) E_minus(conj z)^*` everywhere.
//! `validate_h1` turns each of these into a report entry instead of a panic,
//! so callers can see which hypothesis a broken pair violates and where.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, frob, CMat, CVec, C64};
use crate::matfun::{MatFun, MatPoly};
use crate::quad::{integrate_line, QuadConfig};
use crate::spectral::{self, zeros};

/// Radius around the confluent point `z = conj w` inside which the kernel
/// switches to its derivative form.
pub const KERNEL_CONFLUENT_RADIUS: f64 = 1e-8;

// ---------------------------------------------------------------------------

/// Entire n-vector-valued polynomial (used for exact kernel-combination
/// arithmetic: derivatives and divided differences of kernel sections).
#[derive(Clone, Debug)]
pub struct VecPoly {
    n: usize,
    coeffs: Vec<CVec>,
}

impl VecPoly {
    pub fn new(n: usize, coeffs: Vec<CVec>) -> Result<Self> {
        for c in &coeffs {
            if c.len() != n {
                return Err(Error::Domain("vector coefficient has wrong length".into()));
            }
        }
        let coeffs = if coeffs.is_empty() { vec![CVec::zeros(n)] } else { coeffs };
        Ok(VecPoly { n, coeffs })
    }

    pub fn zero(n: usize) -> Self {
        VecPoly { n, coeffs: vec![CVec::zeros(n)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, z: C64) -> CVec {
        let mut acc = self.coeffs.last().unwrap().clone();
        for k in (0..self.coeffs.len() - 1).rev() {
            acc = acc * z + &self.coeffs[k];
        }
        acc
    }

    pub fn derivative(&self) -> VecPoly {
        if self.coeffs.len() == 1 {
            return VecPoly::zero(self.n);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * cr(k as f64))
            .collect();
        VecPoly { n: self.n, coeffs }
    }

    /// Synthetic division: the result `R` satisfies
    /// `(z - alpha) R(z) + f(alpha) = f(z)`.
    pub fn divided_difference(&self, alpha: C64) -> VecPoly {
        let d = self.coeffs.len() - 1;
        if d == 0 {
            return VecPoly::zero(self.n);
        }
        let mut b = vec![CVec::zeros(self.n); d];
        b[d - 1] = self.coeffs[d].clone();
        for j in (1..d).rev() {
            b[j - 1] = &self.coeffs[j] + &b[j] * alpha;
        }
        VecPoly { n: self.n, coeffs: b }
    }

    pub fn add(&self, other: &VecPoly) -> Result<VecPoly> {
        if self.n != other.n {
            return Err(Error::Domain("vector polynomial dimensions differ".into()));
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![CVec::zeros(self.n); len];
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        Ok(VecPoly { n: self.n, coeffs })
    }

    pub fn scale(&self, s: C64) -> VecPoly {
        VecPoly { n: self.n, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn sub(&self, other: &VecPoly) -> Result<VecPoly> {
        self.add(&other.scale(cr(-1.0)))
    }

    pub fn from_matpoly(p: &MatPoly, u: &CVec) -> VecPoly {
        VecPoly { n: p.dim(), coeffs: p.coeffs().iter().map(|c| c * u).collect() }
    }
}

// ---------------------------------------------------------------------------

/// An admissible pair of entire matrix functions. The struct itself only
/// checks shapes; the analytic hypotheses live in [`validate_h1`].
#[derive(Clone, Debug)]
pub struct DBOperator {
    eminus: MatFun,
    eplus: MatFun,
    n: usize,
}

impl DBOperator {
    pub fn new(eminus: MatFun, eplus: MatFun) -> Result<Self> {
        let n = eplus.dim();
        if n == 0 || eminus.dim() != n {
            return Err(Error::Domain("pair components must share a positive dimension".into()));
        }
        Ok(DBOperator { eminus, eplus, n })
    }

    pub fn from_polys(eminus: MatPoly, eplus: MatPoly) -> Result<Self> {
        DBOperator::new(MatFun::Poly(eminus), MatFun::Poly(eplus))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn e_plus(&self) -> &MatFun {
        &self.eplus
    }

    pub fn e_minus(&self) -> &MatFun {
        &self.eminus
    }

    /// Both components as polynomials, when they are stored that way.
    pub fn poly_components(&self) -> Option<(&MatPoly, &MatPoly)> {
        match (&self.eminus, &self.eplus) {
            (MatFun::Poly(m), MatFun::Poly(p)) => Some((m, p)),
            _ => None,
        }
    }

    pub fn eval_plus(&self, z: C64) -> Result<CMat> {
        self.eplus.eval(z)
    }

    pub fn eval_minus(&self, z: C64) -> Result<CMat> {
        self.eminus.eval(z)
    }

    /// Reproducing kernel `K_w(z)`, with the confluent branch within
    /// [`KERNEL_CONFLUENT_RADIUS`] of `z = conj w`.
    pub fn kernel(&self, w: C64, z: C64) -> Result<CMat> {
        let epw = self.eval_plus(w)?.adjoint();
        let emw = self.eval_minus(w)?.adjoint();
        let wbar = w.conj();
        if (z - wbar).norm() < KERNEL_CONFLUENT_RADIUS {
            let dp = self.eplus.derivative().eval(wbar)?;
            let dm = self.eminus.derivative().eval(wbar)?;
            let num = dp * epw - dm * emw;
            return Ok(num / c(0.0, -2.0 * std::f64::consts::PI));
        }
        let num = self.eval_plus(z)? * epw - self.eval_minus(z)? * emw;
        let rho = c(0.0, -2.0 * std::f64::consts::PI) * (z - wbar);
        Ok(num / rho)
    }

    /// Exact polynomial form of `z -> K_w(z)` for polynomial pairs: the
    /// numerator vanishes at `conj w` by the reflected cancellation, so
    /// synthetic division removes the Cauchy denominator exactly.
    pub fn kernel_poly(&self, w: C64) -> Result<MatPoly> {
        let (em, ep) = self
            .poly_components()
            .ok_or_else(|| Error::Domain("kernel_poly requires polynomial components".into()))?;
        let epw = ep.eval(w).adjoint();
        let emw = em.eval(w).adjoint();
        let num = ep.mul_matrix_right(&epw).sub(&em.mul_matrix_right(&emw))?;
        let r = num.divided_difference(w.conj());
        // 1 / (-2 pi i) = i / (2 pi).
        Ok(r.scale(c(0.0, 1.0 / (2.0 * std::f64::consts::PI))))
    }

    /// Real zeros of `det E_plus`, used as quadrature breakpoints. Only
    /// polynomial components report anything; for other representations the
    /// integrand is assumed smooth.
    pub fn real_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some((em, ep)) = self.poly_components() {
            for p in [ep, em] {
                if let Ok(records) = zeros(p, spectral::DEFAULT_CLUSTER_RADIUS) {
                    for r in records {
                        if r.z.im.abs() <= 1e-7 * (1.0 + r.z.re.abs()) {
                            out.push(r.z.re);
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + a.abs()));
        out
    }
}

// ---------------------------------------------------------------------------

/// Finite combination `f = sum_j K_{w_j}(.) u_j` of kernel sections; the
/// dense span these generate makes them the canonical test vectors.
#[derive(Clone, Debug)]
pub struct KernelCombo {
    pub terms: Vec<(C64, CVec)>,
}

impl KernelCombo {
    pub fn new(terms: Vec<(C64, CVec)>) -> Self {
        KernelCombo { terms }
    }

    pub fn eval(&self, e: &DBOperator, z: C64) -> Result<CVec> {
        let mut acc = CVec::zeros(e.dim());
        for (w, u) in &self.terms {
            acc += e.kernel(*w, z)? * u;
        }
        Ok(acc)
    }

    /// Exact polynomial form for polynomial pairs.
    pub fn vec_poly(&self, e: &DBOperator) -> Result<VecPoly> {
        let mut acc = VecPoly::zero(e.dim());
        for (w, u) in &self.terms {
            let kp = e.kernel_poly(*w)?;
            acc = acc.add(&VecPoly::from_matpoly(&kp, u))?;
        }
        Ok(acc)
    }
}

/// Gram matrix `G_{ij} = <K_{w_j} u_j, K_{w_i} u_i> = u_i^* K_{w_j}(w_i) u_j`,
/// positive semidefinite for admissible pairs.
pub fn gram(e: &DBOperator, terms: &[(C64, CVec)]) -> Result<CMat> {
    let k = terms.len();
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let kij = e.kernel(terms[j].0, terms[i].0)?;
            g[(i, j)] = linalg::inner(&(kij * &terms[j].1), &terms[i].1);
        }
    }
    Ok(g)
}

/// Quadrature result with its convergence diagnostics.
#[derive(Clone, Debug)]
pub struct QuadValue {
    pub value: C64,
    pub doublings: u32,
    pub half_width: f64,
}

/// Space inner product `<f, g> = integral <E_plus(t)^{-1} f(t), E_plus(t)^{-1} g(t)> dt`
/// by adaptive quadrature, splitting panels at real zeros of the determinants.
pub fn inner_product_quadrature(
    e: &DBOperator,
    f: &KernelCombo,
    g: &KernelCombo,
    q: &QuadConfig,
) -> Result<QuadValue> {
    let breaks = e.real_breakpoints();
    let integrand = |t: f64| -> Result<CVec> {
        let z = cr(t);
        let ep = e.eval_plus(z)?;
        let fv = f.eval(e, z)?;
        let gv = g.eval(e, z)?;
        let lu = ep.lu();
        let sf = lu
            .solve(&fv)
            .ok_or_else(|| Error::Numerical(format!("E_plus is singular at quadrature node t = {t}")))?;
        let sg = lu
            .solve(&gv)
            .ok_or_else(|| Error::Numerical(format!("E_plus is singular at quadrature node t = {t}")))?;
        Ok(CVec::from_element(1, linalg::inner(&sf, &sg)))
    };
    let li = integrate_line(1, integrand, &breaks, q)?;
    Ok(QuadValue { value: li.value[0], doublings: li.doublings, half_width: li.half_width })
}

/// `| <f, K_w u> - <f(w), u> |`: the quadrature inner product against a
/// kernel section minus the reproducing value it must equal.
pub fn reproducing_check(
    e: &DBOperator,
    f: &KernelCombo,
    w: C64,
    u: &CVec,
    q: &QuadConfig,
) -> Result<f64> {
    let section = KernelCombo::new(vec![(w, u.clone())]);
    let lhs = inner_product_quadrature(e, f, &section, q)?.value;
    let rhs = linalg::inner(&f.eval(e, w)?, u);
    Ok((lhs - rhs).norm())
}

// ---------------------------------------------------------------------------
// Hardy space membership.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfPlane {
    Upper,
    Lower,
}

/// Outcome of the Cauchy tests at one probe point.
#[derive(Clone, Debug)]
pub struct MembershipEntry {
    pub probe: C64,
    /// `|| h(z) - Cauchy integral ||`, normalized decision in `pass`.
    pub reproduction: f64,
    /// Norm of the conjugate-point integral, which must vanish.
    pub annihilation: f64,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub half_plane: HalfPlane,
    pub entries: Vec<MembershipEntry>,
    /// L2 norm of `h` on the line; `None` when the norm quadrature diverged.
    pub norm: Option<f64>,
    pub pass: bool,
}

/// Default probe points, strictly inside the requested half plane.
pub fn default_probes(half: HalfPlane) -> Vec<C64> {
    let upper = vec![c(0.0, 1.0), c(0.5, 1.5), c(-1.5, 0.8)];
    match half {
        HalfPlane::Upper => upper,
        HalfPlane::Lower => upper.into_iter().map(|z| z.conj()).collect(),
    }
}

/// Tests membership of `h` in the Hardy space of a half plane: at each probe
/// `z` the Cauchy integral over the line must reproduce `h(z)` (with the sign
/// of the contour orientation) and the integral against the reflected pole
/// `conj z` must vanish. A diverging L2 norm or a non-convergent integral is
/// reported as failure, not as an error.
pub fn hardy_membership<H>(
    dim: usize,
    h: H,
    half: HalfPlane,
    probes: &[C64],
    q: &QuadConfig,
) -> Result<MembershipReport>
where
    H: Fn(C64) -> Result<CVec>,
{
    let two_pi_i = c(0.0, 2.0 * std::f64::consts::PI);
    let mut entries = Vec::with_capacity(probes.len());
    for &z in probes {
        match half {
            HalfPlane::Upper if z.im <= 0.0 => {
                return Err(Error::Domain(format!("probe {z} is not in the open upper half plane")))
            }
            HalfPlane::Lower if z.im >= 0.0 => {
                return Err(Error::Domain(format!("probe {z} is not in the open lower half plane")))
            }
            _ => {}
        }
        let hz = h(z)?;
        let scale = 1.0 + hz.norm();
        let stacked = |t: f64| -> Result<CVec> {
            let ht = h(cr(t))?;
            let mut out = CVec::zeros(2 * dim);
            let k1 = linalg::ONE / (cr(t) - z);
            let k2 = linalg::ONE / (cr(t) - z.conj());
            for i in 0..dim {
                out[i] = ht[i] * k1;
                out[i + dim] = ht[i] * k2;
            }
            Ok(out)
        };
        match integrate_line(2 * dim, stacked, &[], q) {
            Ok(li) => {
                let rep_int = li.value.rows(0, dim).into_owned();
                let ann_int = li.value.rows(dim, dim).into_owned();
                let sign = match half {
                    HalfPlane::Upper => linalg::ONE,
                    HalfPlane::Lower => -linalg::ONE,
                };
                let rep_val = rep_int * (sign / two_pi_i);
                let ann = (ann_int / two_pi_i).norm();
                let reproduction = (rep_val - &hz).norm();
                let pass = reproduction <= 1e-3 * scale && ann <= 1e-3 * scale;
                entries.push(MembershipEntry { probe: z, reproduction, annihilation: ann, pass, note: None });
            }
            Err(Error::Convergence { .. }) => {
                entries.push(MembershipEntry {
                    probe: z,
                    reproduction: f64::INFINITY,
                    annihilation: f64::INFINITY,
                    pass: false,
                    note: Some("Cauchy integrals did not converge".into()),
                });
            }
            Err(Error::NonFiniteIntegrand { t }) => {
                entries.push(MembershipEntry {
                    probe: z,
                    reproduction: f64::INFINITY,
                    annihilation: f64::INFINITY,
                    pass: false,
                    note: Some(format!("integrand overflowed at t = {t}; divergent")),
                });
            }
            Err(e) => return Err(e),
        }
    }
    // The L2 norm both witnesses square integrability and flags functions
    // that are bounded but not decaying (their norm quadrature diverges).
    let norm_integrand = |t: f64| -> Result<CVec> {
        let ht = h(cr(t))?;
        Ok(CVec::from_element(1, cr(ht.norm_squared())))
    };
    let norm = match integrate_line(1, norm_integrand, &[], q) {
        Ok(li) => Some(li.value[0].re.max(0.0).sqrt()),
        Err(Error::Convergence { .. }) | Err(Error::NonFiniteIntegrand { .. }) => None,
        Err(e) => return Err(e),
    };
    let pass = norm.is_some() && entries.iter().all(|e| e.pass);
    Ok(MembershipReport { half_plane: half, entries, norm, pass })
}

// ---------------------------------------------------------------------------
// Isometric embedding check.

#[derive(Clone, Debug)]
pub struct EmbedEntry {
    pub norm_base: f64,
    pub norm_embedded: f64,
    pub rel_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct EmbedReport {
    pub entries: Vec<EmbedEntry>,
    pub pass: bool,
}

/// Checks that multiplication by `P` embeds the space of `e0` isometrically
/// into the space of `e`: for each sample combination `f` built on `e0`,
/// `||P f||_e` from quadrature must match the exact Gram norm `||f||_{e0}`.
/// Requires `E_pm = P E0_pm` to hold on a verification grid first.
pub fn embed_check(
    p: &MatFun,
    e0: &DBOperator,
    e: &DBOperator,
    samples: &[KernelCombo],
    q: &QuadConfig,
) -> Result<EmbedReport> {
    for z in linalg::spiral_grid(linalg::ZERO, 4.0, 20) {
        let pv = p.eval(z)?;
        for (lhs, rhs) in [
            (e.eval_plus(z)?, &pv * e0.eval_plus(z)?),
            (e.eval_minus(z)?, &pv * e0.eval_minus(z)?),
        ] {
            let resid = frob(&(&lhs - &rhs));
            if resid > 1e-8 * (1.0 + frob(&lhs)) {
                return Err(Error::FactorMismatch { z, residual: resid });
            }
        }
    }
    let breaks = e.real_breakpoints();
    let mut entries = Vec::with_capacity(samples.len());
    for f in samples {
        // Exact base norm through the reproducing property.
        let g = gram(e0, &f.terms)?;
        let mut norm0_sq = 0.0;
        for i in 0..f.terms.len() {
            for j in 0..f.terms.len() {
                norm0_sq += g[(i, j)].re;
            }
        }
        let norm_base = norm0_sq.max(0.0).sqrt();
        // The embedded element is evaluated as
        //   N(z) K0_w(z) u = (E_plus(z) a - E_minus(z) b) / rho_w(z),
        //   a = E0_plus(w)^* u,  b = E0_minus(w)^* u,
        // touching the base pair only at the off-axis probes w. Canonical
        // base pairs carry exponential twists that overflow far out on the
        // line even though this combination stays bounded there.
        let mut coeffs = Vec::with_capacity(f.terms.len());
        for (w, u) in &f.terms {
            let a = e0.eval_plus(*w)?.adjoint() * u;
            let b = e0.eval_minus(*w)?.adjoint() * u;
            coeffs.push((w.conj(), a, b));
        }
        let integrand = |t: f64| -> Result<CVec> {
            let z = cr(t);
            let ezp = e.eval_plus(z)?;
            let ezm = e.eval_minus(z)?;
            let mut pfv = CVec::zeros(e.dim());
            for (wbar, a, b) in &coeffs {
                let rho = c(0.0, -2.0 * std::f64::consts::PI) * (z - wbar);
                pfv += (&ezp * a - &ezm * b) / rho;
            }
            let ep = ezp;
            let s = ep
                .lu()
                .solve(&pfv)
                .ok_or_else(|| Error::Numerical(format!("E_plus singular at quadrature node t = {t}")))?;
            Ok(CVec::from_element(1, cr(s.norm_squared())))
        };
        let li = integrate_line(1, integrand, &breaks, q)?;
        let norm_embedded = li.value[0].re.max(0.0).sqrt();
        let denom = norm_base.max(1e-300);
        let rel_residual = (norm_embedded - norm_base).abs() / denom;
        let pass = rel_residual <= 1e-3;
        entries.push(EmbedEntry { norm_base, norm_embedded, rel_residual, pass });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(EmbedReport { entries, pass })
}

// ---------------------------------------------------------------------------
// Product of two pairs.

/// Forms the product pair `(E_minus F_minus, E_plus F_plus)` after verifying
/// the four commutation relations that make the product construction valid,
/// then spot-checks the kernel decomposition
/// `K^{EF}_w(z) = E_plus(z) K^F_w(z) E_plus(w)^* + F_minus(z) K^E_w(z) F_minus(w)^*`.
pub fn product_operator(e: &DBOperator, f: &DBOperator, tol: f64) -> Result<DBOperator> {
    if e.dim() != f.dim() {
        return Err(Error::Domain("product factors must share one dimension".into()));
    }
    let grid = linalg::spiral_grid(linalg::ZERO, 3.0, 20);
    for &z in &grid {
        let ep = e.eval_plus(z)?;
        let em = e.eval_minus(z)?;
        let fp = f.eval_plus(z)?;
        let fm = f.eval_minus(z)?;
        let checks: [(&'static str, &CMat, &CMat); 4] = [
            ("F+ E+ = E+ F+", &fp, &ep),
            ("F+ E- = E- F+", &fp, &em),
            ("F- E+ = E+ F-", &fm, &ep),
            ("F- E- = E- F-", &fm, &em),
        ];
        for (name, a, b) in checks {
            let resid = frob(&(a * b - b * a));
            let scale = 1.0 + frob(a) * frob(b);
            if resid > tol * scale {
                return Err(Error::Commutation { relation: name, z, residual: resid });
            }
        }
    }
    let ef = DBOperator::new(
        MatFun::Product(vec![e.e_minus().clone(), f.e_minus().clone()]),
        MatFun::Product(vec![e.e_plus().clone(), f.e_plus().clone()]),
    )?;
    // Kernel decomposition spot check.
    let pts = [c(0.3, 0.9), c(-1.1, 1.4), c(0.8, 0.4), c(-0.2, 2.1)];
    for &w in &pts {
        for &z in &pts {
            let lhs = ef.kernel(w, z)?;
            let term1 = e.eval_plus(z)? * f.kernel(w, z)? * e.eval_plus(w)?.adjoint();
            let term2 = f.eval_minus(z)? * e.kernel(w, z)? * f.eval_minus(w)?.adjoint();
            let rhs = term1 + term2;
            let resid = frob(&(&lhs - &rhs));
            if resid > tol * (1.0 + frob(&lhs)) {
                return Err(Error::Commutation { relation: "kernel decomposition", z, residual: resid });
            }
        }
    }
    Ok(ef)
}

// ---------------------------------------------------------------------------
// Dividing out a zero.

#[derive(Clone, Debug)]
pub struct DivisionReport {
    /// `||f(alpha)||`, which must be a numerical zero on entry.
    pub value_at_alpha: f64,
    /// Set when `alpha` is real and `E_plus(alpha)` is singular there; the
    /// membership assertions are skipped in that case.
    pub case2_precondition_failed: bool,
    pub upper: Option<MembershipReport>,
    pub lower: Option<MembershipReport>,
    /// Quadrature norm of the quotient `g = f / (z - alpha)`.
    pub quotient_norm: Option<f64>,
    pub pass: bool,
}

/// Divides a zero out of a space element: given `f` with `f(alpha) = 0`,
/// forms `g = f / (z - alpha)` (removable branch near `alpha`) and reports
/// whether `E_plus^{-1} g` is upper-Hardy and `E_minus^{-1} g` lower-Hardy,
/// which is the membership criterion for `g` to lie in the space again.
pub fn divide_out_zero(
    e: &DBOperator,
    f: &KernelCombo,
    alpha: C64,
    q: &QuadConfig,
) -> Result<DivisionReport> {
    let scale = {
        let mut s: f64 = 1.0;
        for z in linalg::spiral_grid(linalg::ZERO, 3.0, 12) {
            s = s.max(f.eval(e, z)?.norm());
        }
        s
    };
    let value_at_alpha = f.eval(e, alpha)?.norm();
    if value_at_alpha > 1e-8 * scale {
        return Err(Error::NotAZero { z: alpha, ratio: value_at_alpha / scale });
    }
    // Quotient, exact when the pair is polynomial.
    let poly_quotient: Option<VecPoly> = f.vec_poly(e).ok().map(|vp| vp.divided_difference(alpha));
    let n = e.dim();
    let g = |z: C64| -> Result<CVec> {
        if let Some(vp) = &poly_quotient {
            return Ok(vp.eval(z));
        }
        if (z - alpha).norm() < 1e-6 {
            // Removable point: derivative of f at the midpoint.
            let h = 1e-5;
            let zp = alpha + cr(h);
            let zm = alpha - cr(h);
            return Ok((f.eval(e, zp)? - f.eval(e, zm)?) / cr(2.0 * h));
        }
        Ok(f.eval(e, z)? / (z - alpha))
    };
    // Case split: an interior zero always divides out; a real zero on the
    // axis requires E_plus(alpha) to stay invertible there.
    let mut case2_failed = false;
    if alpha.im.abs() <= 1e-9 * (1.0 + alpha.re.abs()) {
        let m = e.eval_plus(alpha)?;
        let sv = linalg::singular_values(&m);
        let (smax, smin) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
        if smin <= 1e-8 * smax {
            case2_failed = true;
        }
    }
    if case2_failed {
        return Ok(DivisionReport {
            value_at_alpha,
            case2_precondition_failed: true,
            upper: None,
            lower: None,
            quotient_norm: None,
            pass: false,
        });
    }
    // Unsolvable components on the line (underflowed twists) read as a
    // divergent integrand; off the line they stay hard errors.
    let upper = hardy_membership(
        n,
        |z| {
            let m = e.eval_plus(z)?;
            match m.lu().solve(&g(z)?) {
                Some(v) => Ok(v),
                None if z.im == 0.0 => Ok(CVec::from_element(n, cr(f64::INFINITY))),
                None => Err(Error::Numerical(format!("E_plus singular at {z}"))),
            }
        },
        HalfPlane::Upper,
        &default_probes(HalfPlane::Upper),
        q,
    )?;
    let lower = hardy_membership(
        n,
        |z| {
            let m = e.eval_minus(z)?;
            match m.lu().solve(&g(z)?) {
                Some(v) => Ok(v),
                None if z.im == 0.0 => Ok(CVec::from_element(n, cr(f64::INFINITY))),
                None => Err(Error::Numerical(format!("E_minus singular at {z}"))),
            }
        },
        HalfPlane::Lower,
        &default_probes(HalfPlane::Lower),
        q,
    )?;
    let breaks = e.real_breakpoints();
    let quotient_norm = {
        let integrand = |t: f64| -> Result<CVec> {
            let z = cr(t);
            let ep = e.eval_plus(z)?;
            let s = ep
                .lu()
                .solve(&g(z)?)
                .ok_or_else(|| Error::Numerical(format!("E_plus singular at quadrature node t = {t}")))?;
            Ok(CVec::from_element(1, cr(s.norm_squared())))
        };
        match integrate_line(1, integrand, &breaks, q) {
            Ok(li) => Some(li.value[0].re.max(0.0).sqrt()),
            Err(Error::Convergence { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    let pass = upper.pass && lower.pass && quotient_norm.is_some();
    Ok(DivisionReport {
        value_at_alpha,
        case2_precondition_failed: false,
        upper: Some(upper),
        lower: Some(lower),
        quotient_norm,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Hypothesis validation.

/// One named hypothesis check. `margin` is positive with room to spare and
/// negative in proportion to the violation; `witness` locates the worst
/// point.
#[derive(Clone, Debug)]
pub struct H1Check {
    pub name: &'static str,
    pub pass: bool,
    pub margin: f64,
    pub witness: Option<C64>,
}

#[derive(Clone, Debug)]
pub struct H1Report {
    pub checks: Vec<H1Check>,
}

impl H1Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&H1Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Grid specification for [`validate_h1`]: logarithmically spaced rectangles
/// in each half plane plus a refined real-axis sweep.
#[derive(Clone, Debug)]
pub struct H1GridSpec {
    pub re_count: usize,
    pub im_count: usize,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub real_count: usize,
    pub real_max: f64,
}

impl Default for H1GridSpec {
    fn default() -> Self {
        H1GridSpec {
            re_count: 15,
            im_count: 15,
            re_max: 10.0,
            im_min: 1e-2,
            im_max: 10.0,
            real_count: 200,
            real_max: 10.0,
        }
    }
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (llo + (lhi - llo) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

impl H1GridSpec {
    /// Real parts: zero plus symmetric log-spaced values out to `re_max`.
    fn re_values(&self) -> Vec<f64> {
        let side = (self.re_count.max(3) - 1) / 2;
        let mut out = vec![0.0];
        for v in logspace(0.05, self.re_max, side) {
            out.push(v);
            out.push(-v);
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    pub fn upper_points(&self) -> Vec<C64> {
        let re = self.re_values();
        let im = logspace(self.im_min, self.im_max, self.im_count);
        let mut out = Vec::with_capacity(re.len() * im.len());
        for &x in &re {
            for &y in &im {
                out.push(c(x, y));
            }
        }
        out
    }

    pub fn lower_points(&self) -> Vec<C64> {
        self.upper_points().into_iter().map(|z| z.conj()).collect()
    }

    /// Uniform real sweep, refined near the given roots, excluding points
    /// closer than 1e-7 to any of them.
    pub fn real_points(&self, roots: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.real_count)
            .map(|k| -self.real_max + 2.0 * self.real_max * k as f64 / (self.real_count - 1) as f64)
            .collect();
        for &r in roots {
            for d in [1e-3, 1e-5, 2e-7] {
                out.push(r + d);
                out.push(r - d);
            }
        }
        out.retain(|x| roots.iter().all(|r| (x - r).abs() >= 1e-7));
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

/// Real-axis zero locations of a determinant, via the polynomial path.
fn real_det_zeros(f: &MatFun) -> Option<Vec<f64>> {
    let p = f.as_poly()?;
    match zeros(p, spectral::DEFAULT_CLUSTER_RADIUS) {
        Ok(records) => Some(
            records
                .iter()
                .filter(|r| r.z.im.abs() <= 1e-7 * (1.0 + r.z.re.abs()))
                .map(|r| r.z.re)
                .collect(),
        ),
        Err(_) => None,
    }
}

fn all_det_zeros(f: &MatFun) -> Option<Vec<Complex64>> {
    let p = f.as_poly()?;
    zeros(p, spectral::DEFAULT_CLUSTER_RADIUS).ok().map(|rs| rs.iter().map(|r| r.z).collect())
}

/// Validates the admissibility hypotheses of a pair on finite grids. Every
/// outcome is a report entry; nothing here throws on a mathematical failure,
/// only on evaluation breakdown.
pub fn validate_h1(e: &DBOperator, grid: &H1GridSpec, tol: f64) -> Result<H1Report> {
    let n = e.dim();
    let mut checks = Vec::new();
    let upper = grid.upper_points();
    let lower = grid.lower_points();

    // Invertibility in the open half planes. For polynomial components the
    // determinant zeros give exact witnesses; otherwise the grid minimum of
    // sigma_min / sigma_max stands in.
    let inv_check = |f: &MatFun, pts: &[C64], keep_im_positive: bool, name: &'static str| -> Result<H1Check> {
        if let Some(zs) = all_det_zeros(f) {
            let guard = |z: &C64| 1e-9 * (1.0 + z.re.abs());
            let offending: Vec<C64> = zs
                .iter()
                .copied()
                .filter(|z| if keep_im_positive { z.im > guard(z) } else { z.im < -guard(z) })
                .collect();
            if let Some(&worst) = offending
                .iter()
                .max_by(|a, b| a.im.abs().partial_cmp(&b.im.abs()).unwrap())
            {
                return Ok(H1Check { name, pass: false, margin: -worst.im.abs(), witness: Some(worst) });
            }
        } else {
            // No polynomial structure: fall back to the grid scan only.
        }
        let mut margin = f64::INFINITY;
        let mut witness = None;
        for &z in pts {
            let m = f.eval(z)?;
            let sv = linalg::singular_values(&m);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
            if ratio < margin {
                margin = ratio;
                witness = Some(z);
            }
        }
        let pass = margin > 1e-8;
        Ok(H1Check { name, pass, margin, witness: if pass { None } else { witness } })
    };
    checks.push(inv_check(e.e_plus(), &upper, true, "plus_invertible_upper")?);
    checks.push(inv_check(e.e_minus(), &lower, false, "minus_invertible_lower")?);

    // Contractivity of chi = E_plus^{-1} E_minus above the axis.
    {
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        let slack = 1e-10;
        for &z in &upper {
            let ep = e.eval_plus(z)?;
            let em = e.eval_minus(z)?;
            match linalg::solve_mat(&ep, &em) {
                Some(chi) => {
                    let s = linalg::op_norm(&chi);
                    if s > worst {
                        worst = s;
                        witness = Some(z);
                    }
                }
                None => {
                    worst = f64::INFINITY;
                    witness = Some(z);
                    break;
                }
            }
        }
        let pass = worst <= 1.0 + slack;
        checks.push(H1Check {
            name: "chi_contractive_upper",
            pass,
            margin: 1.0 + slack - worst,
            witness: if pass { None } else { witness },
        });
    }

    // Real-axis material: roots first, they feed the refined grid.
    let roots_plus = real_det_zeros(e.e_plus()).unwrap_or_default();
    let roots_minus = real_det_zeros(e.e_minus()).unwrap_or_default();
    let mut all_roots = roots_plus.clone();
    all_roots.extend_from_slice(&roots_minus);
    let xs = grid.real_points(&all_roots);

    // Unitarity of chi on the axis (both orientations).
    {
        let mut worst = 0.0f64;
        let mut witness = None;
        let mut evaluated = false;
        for &x in &xs {
            let z = cr(x);
            let ep = e.eval_plus(z)?;
            let em = e.eval_minus(z)?;
            if let Some(chi) = linalg::solve_mat(&ep, &em) {
                evaluated = true;
                let idm = linalg::identity(n);
                let d1 = frob(&(chi.adjoint() * &chi - &idm));
                let d2 = frob(&(&chi * chi.adjoint() - &idm));
                let d = d1.max(d2);
                if d > worst {
                    worst = d;
                    witness = Some(z);
                }
            }
        }
        let pass = evaluated && worst <= tol * n as f64;
        checks.push(H1Check {
            name: "chi_unitary_on_axis",
            pass,
            margin: tol * n as f64 - worst,
            witness: if pass { None } else { witness },
        });
    }

    // Positivity above the axis.
    {
        let mut worst = f64::INFINITY;
        let mut witness = None;
        for &z in &upper {
            let ep = e.eval_plus(z)?;
            let em = e.eval_minus(z)?;
            let m = &ep * ep.adjoint() - &em * em.adjoint();
            let scale = frob(&(&ep * ep.adjoint())) + frob(&(&em * em.adjoint())) + 1e-300;
            let eig = linalg::hermitian_eigenvalues(&m);
            let normalized = eig.first().copied().unwrap_or(0.0) / scale;
            if normalized < worst {
                worst = normalized;
                witness = Some(z);
            }
        }
        let pass = worst >= -tol;
        checks.push(H1Check {
            name: "positivity_upper",
            pass,
            margin: worst,
            witness: if pass { None } else { witness },
        });
    }

    // Equality on the axis.
    {
        let mut worst = 0.0f64;
        let mut witness = None;
        for &x in &xs {
            let z = cr(x);
            let ep = e.eval_plus(z)?;
            let em = e.eval_minus(z)?;
            let scale = frob(&(&ep * ep.adjoint())) + frob(&(&em * em.adjoint())) + 1e-300;
            let d = frob(&(&ep * ep.adjoint() - &em * em.adjoint())) / scale;
            if d > worst {
                worst = d;
                witness = Some(z);
            }
        }
        let pass = worst <= tol * n as f64;
        checks.push(H1Check {
            name: "equality_on_axis",
            pass,
            margin: tol * n as f64 - worst,
            witness: if pass { None } else { witness },
        });
    }

    // Reflected cancellation everywhere (sampled on both half planes).
    {
        let gplus = e.e_plus().adjoint_reflect();
        let gminus = e.e_minus().adjoint_reflect();
        let mut worst = 0.0f64;
        let mut witness = None;
        for &z in upper.iter().chain(lower.iter()) {
            let ep = e.eval_plus(z)?;
            let em = e.eval_minus(z)?;
            let gp = gplus.eval(z)?;
            let gm = gminus.eval(z)?;
            let lhs = &ep * &gp;
            let rhs = &em * &gm;
            let scale = frob(&lhs) + frob(&rhs) + 1e-300;
            let d = frob(&(&lhs - &rhs)) / scale;
            if d > worst {
                worst = d;
                witness = Some(z);
            }
        }
        let pass = worst <= tol * n as f64;
        checks.push(H1Check {
            name: "reflection_identity",
            pass,
            margin: tol * n as f64 - worst,
            witness: if pass { None } else { witness },
        });
    }

    // The two determinants must share their real zero sets.
    {
        let radius = |x: f64| 1e-6 * (1.0 + x.abs());
        let mut worst = 0.0f64;
        let mut witness = None;
        let mut pass = true;
        for (a, b) in [(&roots_plus, &roots_minus), (&roots_minus, &roots_plus)] {
            for &x in a.iter() {
                let best = b
                    .iter()
                    .map(|&y| (x - y).abs())
                    .fold(f64::INFINITY, f64::min);
                if best > radius(x) {
                    pass = false;
                }
                let score = if best.is_finite() { best } else { f64::MAX };
                if score > worst {
                    worst = score;
                    witness = Some(cr(x));
                }
            }
        }
        checks.push(H1Check {
            name: "real_zero_sets_match",
            pass,
            margin: 1e-6 - worst,
            witness: if pass { None } else { witness },
        });
    }

    // Cokernel ranges must agree at the common real zeros.
    {
        let mut worst = 0.0f64;
        let mut witness = None;
        for &x in &roots_plus {
            if roots_minus.iter().any(|&y| (x - y).abs() <= 1e-6 * (1.0 + x.abs())) {
                let z = cr(x);
                let n = e.dim();
                let vp = e.eval_plus(z)?;
                let vm = e.eval_minus(z)?;
                // Judge rank against the component's size nearby, not against
                // a value that may vanish in every direction at once.
                let sp = linalg::op_norm(&vp).max(spectral::local_scale(|w| e.eval_plus(w), z));
                let sm = linalg::op_norm(&vm).max(spectral::local_scale(|w| e.eval_minus(w), z));
                let pp = spectral::cokernel_projection(&vp, Some(linalg::default_rank_tol(sp, n)))?;
                let pm = spectral::cokernel_projection(&vm, Some(linalg::default_rank_tol(sm, n)))?;
                let d = frob(&(pp.matrix() - pm.matrix()));
                if d > worst {
                    worst = d;
                    witness = Some(z);
                }
            }
        }
        let pass = worst <= 1e-6;
        checks.push(H1Check {
            name: "shared_range_at_real_zeros",
            pass,
            margin: 1e-6 - worst,
            witness: if pass { None } else { witness },
        });
    }

    Ok(H1Report { checks })
}

/// Built-in reference data: admissible pairs and one matrix polynomial.
pub enum Fixture {
    Pair(DBOperator),
    Poly(MatPoly),
}

/// Named fixtures used across tests and the command line driver.
pub fn builtin_fixture(name: &str) -> Result<Fixture> {
    let id = linalg::ONE;
    let mi = c(0.0, -1.0);
    match name {
        "scalar-cayley" => {
            // (z - i, z + i).
            let em = MatPoly::scalar(&[mi, id]);
            let ep = MatPoly::scalar(&[c(0.0, 1.0), id]);
            Ok(Fixture::Pair(DBOperator::from_polys(em, ep)?))
        }
        "diag-2" => {
            let em = MatPoly::new(
                2,
                vec![
                    CMat::from_diagonal(&CVec::from_vec(vec![c(0.0, -1.0), c(0.0, -2.0)])),
                    linalg::identity(2),
                ],
            )?;
            let ep = MatPoly::new(
                2,
                vec![
                    CMat::from_diagonal(&CVec::from_vec(vec![c(0.0, 1.0), c(0.0, 2.0)])),
                    linalg::identity(2),
                ],
            )?;
            Ok(Fixture::Pair(DBOperator::from_polys(em, ep)?))
        }
        "joint-real-zero" => {
            // ((z - 1)(z - i), (z - 1)(z + i)).
            let em = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, 1.0)]);
            let ep = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, -1.0)]);
            Ok(Fixture::Pair(DBOperator::from_polys(em, ep)?))
        }
        "nilpotent-jordan" => {
            let c0 = CMat::from_row_slice(2, 2, &[linalg::ZERO, linalg::ONE, linalg::ZERO, linalg::ZERO]);
            let c1 = linalg::identity(2);
            Ok(Fixture::Poly(MatPoly::new(2, vec![c0, c1])?))
        }
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}
