use debranges_core::debranges::{builtin_fixture, Fixture};
use debranges_core::factor::{
    deflate_left, deflate_right, factor_global, factor_joint, factor_real, partial_product,
    truncation_bound, Side,
};
use debranges_core::linalg::{self, c, cr, CMat, CVec, C64};
use debranges_core::matfun::{FactorMode, MatPoly, Projection};
use debranges_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_c(r: &mut ChaCha8Rng, s: f64) -> C64 {
    c(r.random_range(-s..s), r.random_range(-s..s))
}

fn scalar_entry(m: &CMat) -> C64 {
    m[(0, 0)]
}

// ---------------------------------------------------------------------------
// Single deflation steps.

#[test]
fn deflate_left_scalar_plain() {
    let a = MatPoly::scalar(&[cr(-1.0), cr(1.0)]); // z - 1
    let (b, e2) = deflate_left(&a, cr(1.0), cr(0.0), FactorMode::Plain).unwrap();
    assert_eq!(b.projection().rank(), 1);
    // B(z) = 1 - z, E2 = -1.
    assert!((scalar_entry(&b.eval(cr(3.0))) - cr(-2.0)).norm() <= 1e-14);
    for z in [cr(0.0), cr(5.0), c(1.0, 2.0)] {
        assert!((scalar_entry(&e2.eval(z).unwrap()) - cr(-1.0)).norm() <= 1e-13);
    }
}

#[test]
fn deflate_left_scalar_canonical() {
    let a = MatPoly::scalar(&[cr(-1.0), cr(1.0)]);
    let (b, e2) = deflate_left(&a, cr(1.0), cr(0.0), FactorMode::Canonical).unwrap();
    let mut r = rng(30);
    for _ in 0..20 {
        let z = rand_c(&mut r, 2.0);
        // B(z) = (1 - z) e^z and E2(z) = -e^{-z}; the product restores z - 1.
        let want_b = (linalg::ONE - z) * z.exp();
        assert!((scalar_entry(&b.eval(z)) - want_b).norm() <= 1e-12 * (1.0 + want_b.norm()));
        let want_e = -(-z).exp();
        let got_e = scalar_entry(&e2.eval(z).unwrap());
        assert!((got_e - want_e).norm() <= 1e-12 * (1.0 + want_e.norm()));
        let prod = scalar_entry(&(b.eval(z) * e2.eval(z).unwrap()));
        assert!((prod - (z - cr(1.0))).norm() <= 1e-12 * (1.0 + z.norm()));
    }
}

#[test]
fn deflate_left_diagonal_projection() {
    // diag(z - 1, 1): cokernel at 1 is the first coordinate.
    let a = MatPoly::new(
        2,
        vec![
            CMat::from_diagonal(&CVec::from_vec(vec![cr(-1.0), cr(1.0)])),
            CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(0.0)])),
        ],
    )
    .unwrap();
    let (b, e2) = deflate_left(&a, cr(1.0), cr(0.0), FactorMode::Plain).unwrap();
    let want_p = CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(0.0)]));
    assert!(linalg::frob(&(b.projection().matrix() - &want_p)) <= 1e-12);
    let want_e = CMat::from_diagonal(&CVec::from_vec(vec![cr(-1.0), cr(1.0)]));
    assert!(linalg::frob(&(e2.eval(c(0.3, 0.7)).unwrap() - &want_e)) <= 1e-12);
}

#[test]
fn deflate_right_mirror() {
    // diag(1, z - 1): kernel projection lives on the second coordinate.
    let a = MatPoly::new(
        2,
        vec![
            CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(-1.0)])),
            CMat::from_diagonal(&CVec::from_vec(vec![cr(0.0), cr(1.0)])),
        ],
    )
    .unwrap();
    let (e2, b) = deflate_right(&a, cr(1.0), cr(0.0), FactorMode::Plain).unwrap();
    let want_q = CMat::from_diagonal(&CVec::from_vec(vec![cr(0.0), cr(1.0)]));
    assert!(linalg::frob(&(b.projection().matrix() - &want_q)) <= 1e-12);
    let want_e = CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(-1.0)]));
    assert!(linalg::frob(&(e2.eval(cr(4.0)).unwrap() - &want_e)) <= 1e-12);
    // A = E2 B pointwise.
    let z = c(-0.5, 1.1);
    let prod = e2.eval(z).unwrap() * b.eval(z);
    assert!(linalg::frob(&(prod - a.eval(z))) <= 1e-12);
}

#[test]
fn deflate_rejects_regular_point() {
    let a = MatPoly::scalar(&[cr(-1.0), cr(1.0)]);
    assert!(matches!(
        deflate_left(&a, cr(5.0), cr(0.0), FactorMode::Plain),
        Err(Error::NotAZero { .. })
    ));
}

#[test]
fn deflate_rejects_singular_base_point() {
    let a = MatPoly::scalar_from_roots(&[cr(1.0), cr(2.0)]);
    assert!(matches!(
        deflate_left(&a, cr(1.0), cr(2.0), FactorMode::Plain),
        Err(Error::BasePointSingular { .. })
    ));
}

// ---------------------------------------------------------------------------
// Global factorization.

#[test]
fn factor_global_two_simple_zeros() {
    let a = MatPoly::scalar_from_roots(&[cr(1.0), cr(2.0)]);
    let f = factor_global(&a, cr(0.0), Side::Left, FactorMode::Plain).unwrap();
    assert_eq!(f.factors.len(), 2);
    // Nearest to the base first.
    assert!((f.factors[0].zero() - cr(1.0)).norm() <= 1e-9);
    assert!((f.factors[1].zero() - cr(2.0)).norm() <= 1e-9);
    // Residual is the constant 2.
    for z in [cr(0.0), cr(7.0), c(0.0, 3.0)] {
        assert!((scalar_entry(&f.residual.eval(z).unwrap()) - cr(2.0)).norm() <= 1e-9);
    }
    let resid = f.verify_against(&a, &f.default_grid(100)).unwrap();
    assert!(resid <= 1e-10, "reconstruction residual {resid}");
}

#[test]
fn factor_global_full_rank_double_zero() {
    // diag(z-1, z-1): one factor of rank 2; residual diag(-1, -1).
    let a = MatPoly::new(2, vec![-linalg::identity(2), linalg::identity(2)]).unwrap();
    let f = factor_global(&a, cr(0.0), Side::Left, FactorMode::Plain).unwrap();
    assert_eq!(f.factors.len(), 1);
    assert_eq!(f.factors[0].projection().rank(), 2);
    let e = f.residual.eval(c(0.2, -0.9)).unwrap();
    assert!(linalg::frob(&(e + linalg::identity(2))) <= 1e-10);
}

#[test]
fn factor_global_revisits_scalar_double_zero() {
    // (z-1)^2 needs the same location twice; the residual ends at 1.
    let a = MatPoly::scalar_from_roots(&[cr(1.0), cr(1.0)]);
    let f = factor_global(&a, cr(0.0), Side::Left, FactorMode::Plain).unwrap();
    assert_eq!(f.factors.len(), 2);
    assert!((f.factors[0].zero() - cr(1.0)).norm() <= 1e-7);
    assert!((f.factors[1].zero() - cr(1.0)).norm() <= 1e-7);
    assert!((scalar_entry(&f.residual.eval(cr(1.0)).unwrap()) - cr(1.0)).norm() <= 1e-8);
    assert!(f.residual_invertibility().unwrap() > 1e-8);
}

#[test]
fn factor_global_canonical_reconstructs() {
    let a = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, 2.0)]);
    for side in [Side::Left, Side::Right] {
        let f = factor_global(&a, cr(0.0), side, FactorMode::Canonical).unwrap();
        assert_eq!(f.factors.len(), 2);
        // Canonical factors carry increasing exponential orders.
        assert_eq!(f.factors[0].order(), 1);
        assert_eq!(f.factors[1].order(), 2);
        let resid = f.verify_against(&a, &f.default_grid(60)).unwrap();
        assert!(resid <= 1e-9, "canonical {side:?} residual {resid}");
        assert!(f.residual_invertibility().unwrap() > 1e-8);
    }
}

#[test]
fn factor_global_rejects_singular_base() {
    let a = MatPoly::scalar_from_roots(&[cr(1.0), cr(2.0)]);
    assert!(matches!(
        factor_global(&a, cr(2.0), Side::Left, FactorMode::Plain),
        Err(Error::BasePointSingular { .. })
    ));
}

#[test]
fn factor_global_jordan_block_rank_sum() {
    // det = z^2 with a one-dimensional defect: two rank-1 factors at 0.
    let a = match builtin_fixture("nilpotent-jordan").unwrap() {
        Fixture::Poly(p) => p,
        _ => unreachable!(),
    };
    let f = factor_global(&a, cr(2.0), Side::Left, FactorMode::Plain).unwrap();
    let rank_sum: usize = f.factors.iter().map(|b| b.projection().rank()).sum();
    assert_eq!(rank_sum, 2);
    assert!(f.factors.iter().all(|b| b.zero().norm() <= 1e-9));
    let resid = f.verify_against(&a, &f.default_grid(60)).unwrap();
    assert!(resid <= 1e-9);
}

// ---------------------------------------------------------------------------
// Real-zero-only factorization.

#[test]
fn factor_real_splits_real_from_complex() {
    // (z - 1)(z^2 + 1): N = 1 - z, A0 = -(z^2 + 1).
    let a = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, 1.0), c(0.0, -1.0)]);
    let f = factor_real(&a, FactorMode::Plain).unwrap();
    assert_eq!(f.factors.len(), 1);
    assert!((f.factors[0].zero() - cr(1.0)).norm() <= 1e-9);
    let mut r = rng(31);
    for _ in 0..20 {
        let z = rand_c(&mut r, 2.0);
        let want = -(z * z + cr(1.0));
        let got = scalar_entry(&f.residual.eval(z).unwrap());
        assert!((got - want).norm() <= 1e-9 * (1.0 + want.norm()));
    }
}

#[test]
fn factor_real_leaves_complex_zeros_alone() {
    let a = MatPoly::scalar_from_roots(&[c(0.0, 1.0), c(0.0, -1.0)]);
    let f = factor_real(&a, FactorMode::Plain).unwrap();
    assert!(f.factors.is_empty());
    let z = c(0.4, 0.3);
    assert!(
        (scalar_entry(&f.residual.eval(z).unwrap()) - scalar_entry(&a.eval(z))).norm() <= 1e-12
    );
}

#[test]
fn factor_real_residual_invertible_on_axis() {
    let a = MatPoly::scalar_from_roots(&[cr(1.0), cr(-0.5), c(0.3, 0.8), c(0.3, -0.8)]);
    let f = factor_real(&a, FactorMode::Plain).unwrap();
    assert_eq!(f.factors.len(), 2);
    for k in 0..400 {
        let t = -10.0 + 20.0 * k as f64 / 399.0;
        let v = f.residual.eval(cr(t)).unwrap();
        assert!(
            linalg::sigma_min(&v) > 1e-8 * linalg::op_norm(&v).max(1e-300),
            "residual lost invertibility at t = {t}"
        );
    }
}

// ---------------------------------------------------------------------------
// Joint factorization of a pair.

#[test]
fn factor_joint_scalar_fixture() {
    let e = match builtin_fixture("joint-real-zero").unwrap() {
        Fixture::Pair(e) => e,
        _ => unreachable!(),
    };
    let (n, e0) = factor_joint(&e, FactorMode::Plain).unwrap();
    let mut r = rng(32);
    for _ in 0..20 {
        let z = rand_c(&mut r, 2.0);
        // N = 1 - z; E0_pm = -(z -+ i).
        assert!((scalar_entry(&n.eval(z).unwrap()) - (linalg::ONE - z)).norm() <= 1e-10);
        let m0 = scalar_entry(&e0.eval_minus(z).unwrap());
        let p0 = scalar_entry(&e0.eval_plus(z).unwrap());
        assert!((m0 + (z - c(0.0, 1.0))).norm() <= 1e-10);
        assert!((p0 + (z + c(0.0, 1.0))).norm() <= 1e-10);
        // Pointwise N E0_pm = E_pm.
        let lhs = n.eval(z).unwrap() * e0.eval_minus(z).unwrap();
        assert!(linalg::frob(&(lhs - e.eval_minus(z).unwrap())) <= 1e-10);
    }
}

#[test]
fn factor_joint_without_shared_zeros_is_trivial() {
    let e = match builtin_fixture("scalar-cayley").unwrap() {
        Fixture::Pair(e) => e,
        _ => unreachable!(),
    };
    let (n, e0) = factor_joint(&e, FactorMode::Plain).unwrap();
    let z = c(0.7, -0.4);
    assert!(linalg::frob(&(n.eval(z).unwrap() - linalg::identity(1))) <= 1e-12);
    assert!(
        linalg::frob(&(e0.eval_plus(z).unwrap() - e.eval_plus(z).unwrap())) <= 1e-12
    );
}

#[test]
fn factor_joint_matrix_pair_shares_projection() {
    // diag((z-1)(z-i), z-2i) and its reflected partner share the real zero 1
    // only in the first entry.
    let p1 = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, 1.0)]);
    let p2 = MatPoly::scalar(&[c(0.0, -2.0), cr(1.0)]);
    let q1 = MatPoly::scalar_from_roots(&[cr(1.0), c(0.0, -1.0)]);
    let q2 = MatPoly::scalar(&[c(0.0, 2.0), cr(1.0)]);
    let diag2 = |a: &MatPoly, b: &MatPoly| -> MatPoly {
        let d = a.degree().max(b.degree());
        let coeffs: Vec<CMat> = (0..=d)
            .map(|k| {
                let mut m = linalg::zeros(2);
                if k <= a.degree() {
                    m[(0, 0)] = a.coeff(k)[(0, 0)];
                }
                if k <= b.degree() {
                    m[(1, 1)] = b.coeff(k)[(0, 0)];
                }
                m
            })
            .collect();
        MatPoly::new(2, coeffs).unwrap()
    };
    let e = debranges_core::debranges::DBOperator::from_polys(diag2(&p1, &p2), diag2(&q1, &q2))
        .unwrap();
    let (n, e0) = factor_joint(&e, FactorMode::Plain).unwrap();
    // The shared zero sits at 1 with a rank-1 projection on e1.
    let nv = n.eval(cr(1.0)).unwrap();
    assert!(linalg::sigma_min(&nv) <= 1e-9);
    assert!((nv[(1, 1)] - linalg::ONE).norm() <= 1e-9);
    let mut r = rng(33);
    for _ in 0..10 {
        let z = rand_c(&mut r, 2.0);
        let lhs = n.eval(z).unwrap() * e0.eval_plus(z).unwrap();
        let want = e.eval_plus(z).unwrap();
        assert!(linalg::frob(&(lhs - &want)) <= 1e-9 * (1.0 + linalg::frob(&want)));
    }
    // The reduced pair has no real determinant zeros left.
    let v = e0.eval_plus(cr(1.0)).unwrap();
    assert!(linalg::sigma_min(&v) > 1e-6);
}

// ---------------------------------------------------------------------------
// Partial products and tail bounds.

#[test]
fn partial_product_base_point_is_identity() {
    let data = vec![(cr(2.0), Projection::full(1))];
    let g = partial_product(&data, cr(0.0), 1, cr(0.0)).unwrap();
    assert!((scalar_entry(&g) - linalg::ONE).norm() <= 1e-15);
}

#[test]
fn partial_product_two_scalar_factors() {
    // z1 = 2, z2 = 4 at z = 1: log G = log(1/2) + 1/2 + log(3/4) + 1/4 + 1/32.
    let data = vec![(cr(2.0), Projection::full(1)), (cr(4.0), Projection::full(1))];
    let g = partial_product(&data, cr(0.0), 2, cr(1.0)).unwrap();
    let want = (0.5f64.ln() + 0.5 + 0.75f64.ln() + 0.25 + 1.0 / 32.0).exp();
    assert!((scalar_entry(&g) - cr(want)).norm() <= 1e-12, "got {}", scalar_entry(&g));
}

#[test]
fn partial_product_rejects_overrun() {
    let data = vec![(cr(2.0), Projection::full(1))];
    assert!(partial_product(&data, cr(0.0), 2, cr(1.0)).is_err());
}

#[test]
fn truncation_bound_values() {
    assert_eq!(truncation_bound(0.0, 3).unwrap().bound, 0.0);
    let b = truncation_bound(0.5, 1).unwrap();
    assert!((b.bound - (0.5f64.exp() - 1.0)).abs() <= 1e-15);
    assert!(truncation_bound(1.0, 1).is_err());
    assert!(truncation_bound(-0.1, 1).is_err());
    // Nonincreasing in the truncation index.
    let mut prev = f64::INFINITY;
    for n in 1..10 {
        let bn = truncation_bound(0.9, n).unwrap().bound;
        assert!(bn <= prev);
        prev = bn;
    }
}

#[test]
fn exponential_inequality_frozen_instance() {
    // mu = 1/2, n = 1: 1 - (1 - mu) e^mu against e^{mu^2/(1-mu)} - 1.
    let mu = 0.5f64;
    let lhs = 1.0 - (1.0 - mu) * mu.exp();
    assert!((lhs - 0.17563936464994).abs() <= 1e-12);
    let rhs = truncation_bound(mu, 1).unwrap().bound;
    assert!((rhs - 0.64872127070013).abs() <= 1e-12);
    assert!(lhs <= rhs);
}

#[test]
fn partial_product_tail_estimate_one_instance() {
    // |z_k| growing geometrically; compare the gap between truncations with
    // the summed tail bounds at a fixed point.
    let mut r = rng(34);
    let data: Vec<(C64, Projection)> = (1..=8)
        .map(|k| {
            let dir = C64::from_polar(1.0, r.random_range(0.0..std::f64::consts::TAU));
            (dir * cr(2f64.powi(k)), Projection::full(1))
        })
        .collect();
    let z = c(0.7, -0.4);
    let z0 = cr(0.0);
    let (lo, hi) = (3usize, 8usize);
    let g_lo = partial_product(&data, z0, lo, z).unwrap();
    let g_hi = partial_product(&data, z0, hi, z).unwrap();
    let mut tail = 0.0;
    for k in (lo + 1)..=hi {
        let mu = ((z - z0) / (data[k - 1].0 - z0)).norm();
        tail += mu.powi(k as i32 + 1) / (1.0 - mu);
    }
    let gap = linalg::op_norm(&(g_hi - &g_lo));
    let allowed = linalg::op_norm(&g_lo) * (tail.exp() - 1.0);
    assert!(gap <= allowed + 1e-15, "gap {gap} exceeds tail estimate {allowed}");
}
