use debranges_core::linalg::{self, c, cr, CMat, CVec, C64};
use debranges_core::matfun::{
    cancel_shared_prefix, ElemFactor, FactorMode, MatFun, MatPoly, Projection,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_c(r: &mut ChaCha8Rng, s: f64) -> C64 {
    c(r.random_range(-s..s), r.random_range(-s..s))
}

fn rand_mat(r: &mut ChaCha8Rng, n: usize, s: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| rand_c(r, s))
}

fn rand_poly(r: &mut ChaCha8Rng, n: usize, d: usize, s: f64) -> MatPoly {
    let coeffs = (0..=d).map(|_| rand_mat(r, n, s)).collect();
    MatPoly::new(n, coeffs).unwrap()
}

/// Matrix exponential by scaling and squaring on a plain Taylor series;
/// independent of the library's closed-form projection exponential.
fn exp_oracle(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm = linalg::frob(m);
    let k = (norm.log2().ceil().max(0.0) as u32) + 4;
    let scaled = m / cr(2f64.powi(k as i32));
    let mut term = linalg::identity(n);
    let mut sum = linalg::identity(n);
    for j in 1..30 {
        term = &term * &scaled / cr(j as f64);
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..k {
        out = &out * &out;
    }
    out
}

fn full_scalar_projection() -> Projection {
    Projection::full(1)
}

// ---------------------------------------------------------------------------
// MatPoly basics.

#[test]
fn eval_scalar_linear() {
    let f = MatPoly::scalar(&[c(0.0, 1.0), cr(1.0)]); // z + i
    assert_eq!(f.eval(c(0.0, 1.0))[(0, 0)], c(0.0, 2.0));
    assert_eq!(f.eval(cr(0.0))[(0, 0)], c(0.0, 1.0));
}

#[test]
fn eval_identity_any_point() {
    let f = MatPoly::identity(3);
    let mut r = rng(1);
    for _ in 0..5 {
        let z = rand_c(&mut r, 10.0);
        assert_eq!(f.eval(z), linalg::identity(3));
    }
}

#[test]
fn trailing_zero_coefficients_are_trimmed() {
    let z2 = linalg::zeros(2);
    let f = MatPoly::new(2, vec![linalg::identity(2), z2.clone(), z2]).unwrap();
    assert_eq!(f.degree(), 0);
    assert_eq!(f.coeffs().len(), 1);
}

#[test]
fn scalar_from_roots_matches_product() {
    let roots = [cr(1.0), c(0.0, 1.0), c(-2.0, 0.5)];
    let f = MatPoly::scalar_from_roots(&roots);
    let mut r = rng(2);
    for _ in 0..20 {
        let z = rand_c(&mut r, 3.0);
        let want: C64 = roots.iter().map(|&rt| z - rt).product();
        assert!((f.eval(z)[(0, 0)] - want).norm() <= 1e-12 * (1.0 + want.norm()));
    }
}

#[test]
fn mul_matches_pointwise_product() {
    let mut r = rng(3);
    for _ in 0..10 {
        let a = rand_poly(&mut r, 2, 3, 1.0);
        let b = rand_poly(&mut r, 2, 2, 1.0);
        let ab = a.mul(&b).unwrap();
        let z = rand_c(&mut r, 2.0);
        let want = a.eval(z) * b.eval(z);
        assert!(linalg::frob(&(ab.eval(z) - &want)) <= 1e-12 * (1.0 + linalg::frob(&want)));
    }
}

// ---------------------------------------------------------------------------
// Derivatives.

#[test]
fn derivative_power_rule() {
    // z^2 I -> 2z I.
    let f = MatPoly::new(2, vec![linalg::zeros(2), linalg::zeros(2), linalg::identity(2)]).unwrap();
    let df = f.derivative();
    assert_eq!(df.degree(), 1);
    let z = c(0.7, -0.3);
    assert!(linalg::frob(&(df.eval(z) - linalg::identity(2) * (z * cr(2.0)))) <= 1e-14);
}

#[test]
fn derivative_linear_scalar() {
    let f = MatPoly::scalar(&[c(0.0, 1.0), cr(1.0)]);
    assert_eq!(f.derivative().eval(cr(0.0))[(0, 0)], cr(1.0));
}

#[test]
fn derivative_matches_finite_difference() {
    let mut r = rng(4);
    let poly = MatFun::Poly(rand_poly(&mut r, 3, 4, 1.0));
    let b1 = ElemFactor::new(
        cr(0.0),
        c(1.5, 0.5),
        Projection::from_span(3, &[CVec::from_vec(vec![cr(1.0), cr(1.0), cr(0.0)])]).unwrap(),
        2,
        FactorMode::Canonical,
    )
    .unwrap();
    let b2 = ElemFactor::new(cr(0.0), cr(2.0), Projection::full(3), 1, FactorMode::Plain).unwrap();
    let prod = MatFun::Product(vec![MatFun::Factor(b1.clone()), MatFun::Factor(b2.clone())]);
    let h = 1e-5;
    for f in [poly, MatFun::Factor(b1), MatFun::Factor(b2), prod] {
        let df = f.derivative();
        for _ in 0..20 {
            let z = rand_c(&mut r, 2.0);
            let fd = (f.eval(z + cr(h)).unwrap() - f.eval(z - cr(h)).unwrap()) / cr(2.0 * h);
            let exact = df.eval(z).unwrap();
            let scale = linalg::frob(&exact).max(1.0);
            assert!(
                linalg::frob(&(&exact - &fd)) <= 1e-6 * scale,
                "derivative mismatch at {z}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Divided differences.

#[test]
fn divided_difference_square() {
    // (z^2 - 1) / (z - 1) = z + 1.
    let f = MatPoly::scalar(&[cr(0.0), cr(0.0), cr(1.0)]);
    let r = f.divided_difference(cr(1.0));
    assert_eq!(r.degree(), 1);
    assert!((r.eval(cr(0.0))[(0, 0)] - cr(1.0)).norm() <= 1e-15);
    assert!((r.eval(cr(5.0))[(0, 0)] - cr(6.0)).norm() <= 1e-15);
}

#[test]
fn divided_difference_linear_constant() {
    let f = MatPoly::scalar(&[c(0.0, 1.0), cr(1.0)]);
    let r = f.divided_difference(c(0.0, 1.0));
    assert_eq!(r.degree(), 0);
    assert_eq!(r.eval(cr(7.0))[(0, 0)], cr(1.0));
}

#[test]
fn divided_difference_cube() {
    let f = MatPoly::scalar(&[cr(0.0), cr(0.0), cr(0.0), cr(1.0)]);
    let r = f.divided_difference(cr(0.0));
    assert_eq!(r.degree(), 2);
    assert!((r.eval(cr(3.0))[(0, 0)] - cr(9.0)).norm() <= 1e-15);
}

#[test]
fn divided_difference_reconstructs_exactly() {
    let mut r = rng(5);
    for _ in 0..5 {
        let f = rand_poly(&mut r, 2, 4, 1.0);
        let alpha = rand_c(&mut r, 2.0);
        let q = f.divided_difference(alpha);
        // (z - alpha) q + f(alpha) in coefficient arithmetic.
        let rebuilt = q.mul_linear(alpha).add(&MatPoly::constant(f.eval(alpha)).unwrap()).unwrap();
        assert!(rebuilt.coeff_distance(&f) <= 1e-12 * (1.0 + f.max_coeff_norm()));
        for _ in 0..10 {
            let z = rand_c(&mut r, 3.0);
            let want = f.eval(z);
            let got = q.eval(z) * (z - alpha) + f.eval(alpha);
            assert!(linalg::frob(&(got - &want)) <= 1e-10 * (1.0 + linalg::frob(&want)));
        }
    }
}

#[test]
fn divided_difference_at_alpha_is_derivative() {
    let mut r = rng(6);
    let f = rand_poly(&mut r, 2, 5, 1.0);
    let alpha = c(0.4, -0.7);
    let q = f.divided_difference(alpha);
    let want = f.derivative().eval(alpha);
    assert!(linalg::frob(&(q.eval(alpha) - &want)) <= 1e-12 * (1.0 + linalg::frob(&want)));
}

#[test]
fn backshift_fallback_matches_quotient() {
    // Non-polynomial path: divided difference of an elementary factor.
    let b = ElemFactor::new(cr(0.0), cr(2.0), Projection::full(2), 1, FactorMode::Canonical).unwrap();
    let f = MatFun::Factor(b);
    let alpha = c(0.3, 0.2);
    let q = f.divided_difference(alpha);
    let fa = f.eval(alpha).unwrap();
    let z = c(-1.0, 0.6);
    let want = (f.eval(z).unwrap() - &fa) / (z - alpha);
    let got = q.eval(z).unwrap();
    assert!(linalg::frob(&(&got - &want)) <= 1e-9 * (1.0 + linalg::frob(&want)));
    // Near alpha the removable branch takes over and stays finite.
    let near = alpha + cr(1e-9);
    assert!(q.eval(near).unwrap().iter().all(|v| v.is_finite()));
}

// ---------------------------------------------------------------------------
// Adjoint reflection.

#[test]
fn adjoint_reflect_scalar_linear() {
    let f = MatPoly::scalar(&[c(0.0, 1.0), cr(1.0)]); // z + i
    let g = f.adjoint_reflect();
    let mut r = rng(7);
    for _ in 0..10 {
        let z = rand_c(&mut r, 2.0);
        assert!((g.eval(z)[(0, 0)] - (z - c(0.0, 1.0))).norm() <= 1e-15);
    }
}

#[test]
fn adjoint_reflect_fixes_hermitian_constant() {
    let h = CMat::from_row_slice(2, 2, &[cr(2.0), c(1.0, 3.0), c(1.0, -3.0), cr(-1.0)]);
    let f = MatPoly::constant(h.clone()).unwrap();
    assert_eq!(f.adjoint_reflect().eval(cr(0.0)), h);
}

#[test]
fn adjoint_reflect_transposes_jordan_block() {
    let f = MatPoly::new(
        2,
        vec![
            CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]),
            linalg::identity(2),
        ],
    )
    .unwrap();
    let g = f.adjoint_reflect();
    let z = c(0.5, -1.2);
    let want = CMat::from_row_slice(2, 2, &[z, cr(0.0), cr(1.0), z]);
    assert!(linalg::frob(&(g.eval(z) - &want)) <= 1e-15);
}

#[test]
fn adjoint_reflect_is_pointwise_conjugate_adjoint() {
    let mut r = rng(8);
    for _ in 0..5 {
        let f = rand_poly(&mut r, 3, 3, 1.0);
        let g = MatFun::Poly(f.clone()).adjoint_reflect();
        let z = rand_c(&mut r, 2.0);
        let want = f.eval(z.conj()).adjoint();
        assert!(linalg::frob(&(g.eval(z).unwrap() - &want)) <= 1e-13 * (1.0 + linalg::frob(&want)));
    }
}

// ---------------------------------------------------------------------------
// Elementary factors.

#[test]
fn canonical_scalar_frozen_value() {
    // z0 = 0, zk = 1, full projection, m = 1, at z = -1: (1 - t) e^t at t = -1.
    let b = ElemFactor::new(cr(0.0), cr(1.0), full_scalar_projection(), 1, FactorMode::Canonical)
        .unwrap();
    let v = b.eval(cr(-1.0))[(0, 0)];
    assert!((v - cr(0.735758882342884643)).norm() <= 1e-12);
}

#[test]
fn factor_is_identity_at_base_and_singular_at_zero() {
    let p = Projection::from_span(2, &[CVec::from_vec(vec![cr(1.0), c(0.0, 1.0)])]).unwrap();
    for mode in [FactorMode::Plain, FactorMode::Canonical] {
        let b = ElemFactor::new(c(0.5, 0.0), c(2.0, 1.0), p.clone(), 2, mode).unwrap();
        assert!(linalg::frob(&(b.eval(c(0.5, 0.0)) - linalg::identity(2))) <= 1e-14);
        let at_zero = b.eval(c(2.0, 1.0));
        assert!(linalg::sigma_min(&at_zero) <= 1e-12);
        // The lost directions are exactly ran P.
        assert!(linalg::frob(&(p.matrix() * &at_zero)) <= 1e-12);
    }
}

#[test]
fn canonical_matches_literal_exponential() {
    let mut r = rng(9);
    for _ in 0..10 {
        let n = r.random_range(1..4usize);
        let v: Vec<CVec> = (0..r.random_range(1..=n))
            .map(|_| CVec::from_fn(n, |_, _| rand_c(&mut r, 1.0)))
            .collect();
        let p = Projection::from_span(n, &v).unwrap();
        let m = r.random_range(1..5u32);
        let z0 = rand_c(&mut r, 0.5);
        let zk = z0 + c(1.0, 0.3);
        let b = ElemFactor::new(z0, zk, p.clone(), m, FactorMode::Canonical).unwrap();
        // Random t with |t| <= 3, mapped back to z.
        let t = rand_c(&mut r, 3.0 / 1.5);
        let z = z0 + t * (zk - z0);
        let g: C64 = (1..=m).map(|j| t.powu(j) / cr(j as f64)).sum();
        let literal =
            (linalg::identity(n) - p.matrix() * t) * exp_oracle(&(p.matrix() * g));
        let got = b.eval(z);
        assert!(
            linalg::frob(&(&got - &literal)) <= 1e-10 * (1.0 + linalg::frob(&literal)),
            "literal exponential mismatch at t = {t}"
        );
    }
}

#[test]
fn canonical_det_identity() {
    let mut r = rng(10);
    for _ in 0..10 {
        let n = 3;
        let v: Vec<CVec> = (0..r.random_range(1..=n))
            .map(|_| CVec::from_fn(n, |_, _| rand_c(&mut r, 1.0)))
            .collect();
        let p = Projection::from_span(n, &v).unwrap();
        let rank = p.rank() as u32;
        let m = r.random_range(1..4u32);
        let b = ElemFactor::new(cr(0.0), c(1.0, 1.0), p, m, FactorMode::Canonical).unwrap();
        let z = rand_c(&mut r, 2.0);
        let t = z / c(1.0, 1.0);
        let g: C64 = (1..=m).map(|j| t.powu(j) / cr(j as f64)).sum();
        let want = (linalg::ONE - t).powu(rank) * (g * cr(rank as f64)).exp();
        let got = b.det(z);
        assert!((got - want).norm() <= 1e-10 * (1.0 + want.norm()));
        // And the closed form matches the dense determinant.
        let dense = linalg::det(&b.eval(z));
        assert!((got - dense).norm() <= 1e-10 * (1.0 + dense.norm()));
    }
}

#[test]
fn plain_factor_times_inverse_is_identity() {
    let p = Projection::from_span(3, &[
        CVec::from_vec(vec![cr(1.0), cr(0.0), c(0.0, 1.0)]),
        CVec::from_vec(vec![cr(0.0), cr(1.0), cr(0.0)]),
    ])
    .unwrap();
    let b = ElemFactor::new(cr(0.0), c(1.0, -2.0), p, 1, FactorMode::Plain).unwrap();
    let f = MatFun::Product(vec![MatFun::Factor(b.clone()), MatFun::Inverse(b.clone())]);
    let mut r = rng(11);
    for _ in 0..20 {
        let z = rand_c(&mut r, 4.0);
        if (z - c(1.0, -2.0)).norm() < 1e-3 {
            continue;
        }
        assert!(linalg::frob(&(f.eval(z).unwrap() - linalg::identity(3))) <= 1e-12);
    }
}

#[test]
fn inverse_fails_on_pole() {
    let b = ElemFactor::new(cr(0.0), cr(1.0), full_scalar_projection(), 1, FactorMode::Plain)
        .unwrap();
    assert!(b.eval_inverse(cr(1.0)).is_err());
    assert!(MatFun::Inverse(b).eval(cr(1.0)).is_err());
}

#[test]
fn deeply_twisted_factor_underflows_cleanly() {
    // Far out on the real axis the canonical twist passes below the smallest
    // double on one side and above the largest on the other; the decaying
    // side must reach exact zero without a NaN on the way, and the reciprocal
    // of the overflowing side must come back as a clean zero too.
    let b = ElemFactor::new(cr(0.0), cr(1.0), full_scalar_projection(), 1, FactorMode::Canonical)
        .unwrap();
    let sub = b.eval(cr(-745.0))[(0, 0)];
    assert!(sub.is_finite() && sub.re > 0.0, "subnormal range should stay exact");
    let w = b.eval(cr(-1400.0))[(0, 0)];
    assert_eq!(w, linalg::ZERO);
    let v = b.eval_inverse(cr(745.0)).unwrap()[(0, 0)];
    assert!(v.re.is_finite() && v.im.is_finite());
}

// ---------------------------------------------------------------------------
// Products, sums, structural cancellation.

#[test]
fn product_eval_is_pointwise() {
    let mut r = rng(12);
    let a = rand_poly(&mut r, 2, 2, 1.0);
    let b = rand_poly(&mut r, 2, 3, 1.0);
    let f = MatFun::Product(vec![MatFun::Poly(a.clone()), MatFun::Poly(b.clone())]);
    for _ in 0..20 {
        let z = rand_c(&mut r, 2.0);
        let want = a.eval(z) * b.eval(z);
        assert!(
            linalg::frob(&(f.eval(z).unwrap() - &want)) <= 1e-12 * (1.0 + linalg::frob(&want))
        );
    }
}

#[test]
fn product_dimension_mismatch_is_rejected() {
    let a = MatFun::Poly(MatPoly::identity(2));
    let b = MatFun::Poly(MatPoly::identity(3));
    assert!(MatFun::product(2, vec![a, b]).is_err());
}

#[test]
fn simplified_cancels_adjacent_inverse_pairs() {
    let b = ElemFactor::new(cr(0.0), c(0.0, 1.0), full_scalar_projection(), 3, FactorMode::Canonical)
        .unwrap();
    let a = MatPoly::scalar(&[cr(1.0), cr(2.0)]);
    let f = MatFun::Product(vec![
        MatFun::Factor(b.clone()),
        MatFun::Inverse(b.clone()),
        MatFun::Poly(a.clone()),
    ]);
    let s = f.simplified();
    // The twisted pair is gone, so the value is finite far out where the
    // unreduced product would overflow.
    let z = cr(600.0);
    let got = s.eval(z).unwrap();
    assert!(linalg::frob(&(&got - &a.eval(z))) <= 1e-9 * linalg::frob(&a.eval(z)));
}

#[test]
fn cancel_shared_prefix_drops_common_run() {
    let b1 = ElemFactor::new(cr(0.0), c(0.0, 1.0), full_scalar_projection(), 1, FactorMode::Canonical)
        .unwrap();
    let b2 = ElemFactor::new(cr(0.0), c(0.0, -1.0), full_scalar_projection(), 2, FactorMode::Canonical)
        .unwrap();
    let pa = MatPoly::scalar(&[cr(1.0), cr(1.0)]);
    let pb = MatPoly::scalar(&[cr(-1.0), cr(1.0)]);
    let fa = MatFun::Product(vec![MatFun::Factor(b1.clone()), MatFun::Poly(pa.clone())]);
    let fb = MatFun::Product(vec![MatFun::Factor(b1.clone()), MatFun::Poly(pb.clone())]);
    let (ra, rb) = cancel_shared_prefix(&fa, &fb);
    let z = c(0.3, 0.4);
    assert!(linalg::frob(&(ra.eval(z).unwrap() - pa.eval(z))) <= 1e-13);
    assert!(linalg::frob(&(rb.eval(z).unwrap() - pb.eval(z))) <= 1e-13);
    // Different leading factors leave both sides alone.
    let fc = MatFun::Product(vec![MatFun::Factor(b2.clone()), MatFun::Poly(pb.clone())]);
    let (ua, uc) = cancel_shared_prefix(&fa, &fc);
    let va = ua.eval(z).unwrap();
    let vc = uc.eval(z).unwrap();
    assert!(linalg::frob(&(va - fa.eval(z).unwrap())) <= 1e-13);
    assert!(linalg::frob(&(vc - fc.eval(z).unwrap())) <= 1e-13);
}

// ---------------------------------------------------------------------------
// Projections.

#[test]
fn projection_from_span_is_orthogonal_idempotent() {
    let mut r = rng(13);
    for _ in 0..10 {
        let n = r.random_range(2..5usize);
        let k = r.random_range(1..=n);
        let v: Vec<CVec> =
            (0..k).map(|_| CVec::from_fn(n, |_, _| rand_c(&mut r, 1.0))).collect();
        let p = Projection::from_span(n, &v).unwrap();
        let m = p.matrix();
        assert!(linalg::frob(&(m * m - m)) <= 1e-12, "not idempotent");
        assert!(linalg::frob(&(m.adjoint() - m)) <= 1e-12, "not hermitian");
        assert_eq!(p.rank() + p.complement().rank(), n);
        // Spanning vectors are fixed by the projection.
        for u in &v {
            assert!(linalg::vec_norm(&(m * u - u)) <= 1e-10 * linalg::vec_norm(u));
        }
    }
}

#[test]
fn projection_rejects_non_projection_matrix() {
    let m = CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(0.0), cr(0.0)]);
    assert!(Projection::new(m).is_err());
}

#[test]
fn projection_accepts_exact_projection_matrix() {
    let m = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]);
    let p = Projection::new(m).unwrap();
    assert_eq!(p.rank(), 1);
}
