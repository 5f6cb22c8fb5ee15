use std::path::PathBuf;
use std::process::Command;

use debranges_core::debranges::{builtin_fixture, DBOperator, Fixture, KernelCombo};
use debranges_core::json::{
    parse_combo, parse_matpoly, parse_operator, DBOperatorJson, KernelComboJson, MatPolyJson,
};
use debranges_core::linalg::{self, c, cr, CMat, CVec, C64};
use debranges_core::matfun::MatPoly;
use debranges_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_c(r: &mut ChaCha8Rng, s: f64) -> C64 {
    c(r.random_range(-s..s), r.random_range(-s..s))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("debranges-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

// ---------------------------------------------------------------------------
// Wire formats.

#[test]
fn matpoly_roundtrip_is_bit_exact() {
    let mut r = rng(60);
    for _ in 0..10 {
        let n = r.random_range(1..4usize);
        let d = r.random_range(0..4usize);
        let coeffs: Vec<CMat> = (0..=d)
            .map(|_| CMat::from_fn(n, n, |_, _| rand_c(&mut r, 1e3)))
            .collect();
        let p = MatPoly::new(n, coeffs).unwrap();
        let text = serde_json::to_string(&MatPolyJson::from_matpoly(&p)).unwrap();
        let q = parse_matpoly(&text).unwrap();
        assert_eq!(p.dim(), q.dim());
        assert_eq!(p.degree(), q.degree());
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }
}

#[test]
fn matpoly_roundtrip_keeps_negative_zero() {
    let p = MatPoly::constant(CMat::from_row_slice(1, 1, &[c(-0.0, 0.0)])).unwrap();
    let text = serde_json::to_string(&MatPolyJson::from_matpoly(&p)).unwrap();
    let q = parse_matpoly(&text).unwrap();
    assert_eq!(q.coeff(0)[(0, 0)].re.to_bits(), (-0.0f64).to_bits());
}

#[test]
fn operator_roundtrip() {
    let e = match builtin_fixture("diag-2").unwrap() {
        Fixture::Pair(e) => e,
        _ => unreachable!(),
    };
    let text = serde_json::to_string(&DBOperatorJson::from_operator(&e).unwrap()).unwrap();
    let back = parse_operator(&text).unwrap();
    assert_eq!(back.dim(), 2);
    let z = c(0.3, 0.8);
    assert!(
        linalg::frob(&(back.eval_plus(z).unwrap() - e.eval_plus(z).unwrap())) == 0.0,
        "operator roundtrip moved coefficients"
    );
}

#[test]
fn operator_dimension_mismatch_is_a_parse_error() {
    let one = MatPolyJson::from_matpoly(&MatPoly::identity(1));
    let two = MatPolyJson::from_matpoly(&MatPoly::identity(2));
    let bad = serde_json::to_string(&serde_json::json!({
        "n": 2,
        "E_minus": one,
        "E_plus": two,
    }))
    .unwrap();
    assert!(matches!(parse_operator(&bad), Err(Error::Parse(_))));
}

#[test]
fn combo_roundtrip_and_validation() {
    let f = KernelCombo::new(vec![
        (c(0.0, 1.0), CVec::from_vec(vec![cr(1.0), c(0.0, -2.0)])),
        (c(0.5, 2.0), CVec::from_vec(vec![cr(0.0), cr(3.0)])),
    ]);
    let text = serde_json::to_string(&KernelComboJson::from_combo(&f)).unwrap();
    let back = parse_combo(&text, 2).unwrap();
    assert_eq!(back.terms.len(), 2);
    assert_eq!(back.terms[0].0, c(0.0, 1.0));
    assert_eq!(back.terms[1].1[1], cr(3.0));
    // Declared dimension must match the vectors.
    assert!(matches!(parse_combo(&text, 3), Err(Error::Parse(_))));
}

#[test]
fn garbage_input_is_a_parse_error() {
    assert!(matches!(parse_matpoly("{ not json"), Err(Error::Parse(_))));
    assert!(matches!(parse_matpoly("{\"n\": 0, \"coeffs\": []}"), Err(Error::Parse(_))));
}

// ---------------------------------------------------------------------------
// Command line driver.

fn run_cli(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_debranges"))
        .args(args)
        .output()
        .expect("binary runs");
    let code = out.status.code().unwrap_or(-1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let report: Value = serde_json::from_str(stdout.trim())
        .unwrap_or_else(|_| panic!("non-JSON report for {args:?}: {stdout}"));
    (code, report)
}

#[test]
fn report_envelope_has_the_fixed_fields() {
    let (code, rep) = run_cli(&["kernel", "--fixture", "scalar-cayley", "--w", "0,1", "--z", "0,1"]);
    assert_eq!(code, 0);
    let obj = rep.as_object().unwrap();
    let keys: Vec<&String> = obj.keys().collect();
    assert_eq!(
        keys,
        ["input_digest", "payload", "status", "timing_ms", "tool_version", "verb"]
            .iter()
            .collect::<Vec<_>>()
    );
    assert_eq!(rep["verb"], "kernel");
    assert_eq!(rep["status"], "pass");
    assert_eq!(rep["tool_version"], env!("CARGO_PKG_VERSION"));
    let digest = rep["input_digest"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
    // Constant kernel value 1/pi.
    let entry = &rep["payload"]["matrix"][0][0];
    assert!((entry[0].as_f64().unwrap() - std::f64::consts::FRAC_1_PI).abs() <= 1e-12);
    assert!(entry[1].as_f64().unwrap().abs() <= 1e-12);
}

#[test]
fn zeros_verb_reports_multiplicity_and_defect() {
    let p = MatPoly::new(2, vec![-linalg::identity(2), linalg::identity(2)]).unwrap();
    let path = scratch("double-zero.json");
    std::fs::write(&path, serde_json::to_string(&MatPolyJson::from_matpoly(&p)).unwrap())
        .unwrap();
    let (code, rep) = run_cli(&["zeros", "--in", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let zs = rep["payload"]["zeros"].as_array().unwrap();
    assert_eq!(zs.len(), 1);
    assert_eq!(zs[0]["mult"], 2);
    assert_eq!(zs[0]["defect"], 2);
    assert!((zs[0]["z"][0].as_f64().unwrap() - 1.0).abs() <= 1e-8);
}

#[test]
fn factor_verb_with_shifted_base() {
    let (code, rep) = run_cli(&[
        "factor",
        "--fixture",
        "nilpotent-jordan",
        "--base",
        "2",
        "--side",
        "right",
    ]);
    assert_eq!(code, 0, "report: {rep}");
    assert_eq!(rep["status"], "pass");
}

#[test]
fn factor_verb_default_base_on_zero_set_is_a_numeric_error() {
    let (code, rep) = run_cli(&["factor", "--fixture", "nilpotent-jordan"]);
    assert_eq!(code, 3);
    assert_eq!(rep["status"], "error");
}

#[test]
fn verify_h1_discriminates() {
    let (code, rep) = run_cli(&["verify-h1", "--fixture", "scalar-cayley"]);
    assert_eq!(code, 0);
    assert_eq!(rep["status"], "pass");

    // Swapped components must fail, not error.
    let em = MatPoly::scalar(&[c(0.0, 1.0), cr(1.0)]);
    let ep = MatPoly::scalar(&[c(0.0, -1.0), cr(1.0)]);
    let e = DBOperator::from_polys(em, ep).unwrap();
    let path = scratch("swapped.json");
    std::fs::write(
        &path,
        serde_json::to_string(&DBOperatorJson::from_operator(&e).unwrap()).unwrap(),
    )
    .unwrap();
    let (code, rep) = run_cli(&["verify-h1", "--in", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(rep["status"], "fail");
}

#[test]
fn unknown_fixture_is_a_usage_error() {
    let (code, rep) = run_cli(&["zeros", "--fixture", "no-such-fixture"]);
    assert_eq!(code, 2);
    assert_eq!(rep["status"], "error");
}

#[test]
fn malformed_input_file_is_a_parse_error() {
    let path = scratch("garbage.json");
    std::fs::write(&path, "{ definitely not json").unwrap();
    let (code, rep) = run_cli(&["zeros", "--in", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(rep["status"], "error");
}

#[test]
fn resolvent_verb_reports_small_residual() {
    let (code, rep) = run_cli(&["resolvent", "--fixture", "scalar-cayley", "--s", "eplus"]);
    assert_eq!(code, 0, "report: {rep}");
    let resid = rep["payload"]["max_residual"].as_f64().unwrap();
    assert!(resid <= 1e-8);
}

#[test]
fn pair_fixture_fed_to_a_polynomial_verb_is_a_numeric_error() {
    let (code, rep) = run_cli(&["zeros", "--fixture", "scalar-cayley"]);
    assert_eq!(code, 3);
    assert_eq!(rep["status"], "error");
    assert!(rep["payload"]["error"].as_str().unwrap().contains("pair"));
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    // Clap rejects the invocation before a report exists; only the code matters.
    let out = Command::new(env!("CARGO_BIN_EXE_debranges"))
        .args(["fixtures"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn reports_are_deterministic_up_to_timing() {
    let args = ["gram", "--fixture", "diag-2", "--points", "0,1;0.5,1.5"];
    let (c1, mut r1) = run_cli(&args);
    let (c2, mut r2) = run_cli(&args);
    assert_eq!(c1, c2);
    r1.as_object_mut().unwrap().remove("timing_ms");
    r2.as_object_mut().unwrap().remove("timing_ms");
    assert_eq!(r1, r2, "same invocation produced different reports");
}

#[test]
fn out_flag_duplicates_the_report() {
    let path = scratch("report-copy.json");
    let (code, rep) = run_cli(&[
        "kernel",
        "--fixture",
        "diag-2",
        "--w",
        "0,1",
        "--z",
        "0,1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let copied: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rep, copied);
}

#[test]
fn fixtures_verb_dumps_reparseable_json() {
    for name in ["scalar-cayley", "diag-2", "joint-real-zero"] {
        let (code, rep) = run_cli(&["fixtures", name]);
        assert_eq!(code, 0);
        assert_eq!(rep["payload"]["name"], name);
        assert_eq!(rep["payload"]["kind"], "pair");
    }
    let (code, rep) = run_cli(&["fixtures", "nilpotent-jordan"]);
    assert_eq!(code, 0);
    assert_eq!(rep["payload"]["kind"], "matrix-polynomial");

    let path = scratch("fixture-dump.json");
    let (code, _) = run_cli(&["fixtures", "diag-2", "--write", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let dumped = std::fs::read_to_string(&path).unwrap();
    assert!(parse_operator(&dumped).is_ok(), "written fixture does not re-parse");

    let (code, rep) = run_cli(&["fixtures", "no-such"]);
    assert_eq!(code, 2);
    assert_eq!(rep["status"], "error");
}
