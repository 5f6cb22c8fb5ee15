//! Command line driver. Every verb prints exactly one JSON report to stdout:
//!
//! ```json
//! {"verb": ..., "status": "pass" | "fail" | "error", "payload": {...},
//!  "timing_ms": ..., "tool_version": ..., "input_digest": ...}
//! ```
//!
//! and exits 0 on pass, 1 on fail, 2 on usage or input parse errors, 3 on
//! numerical failure. `input_digest` is the SHA-256 of the raw input bytes in
//! argument order (fixture names count as their UTF-8 bytes), so identical
//! invocations are attributable to identical inputs. Apart from `timing_ms`
//! the report is deterministic: repeated runs produce byte-identical
//! payloads.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::assoc::{self, AssociatedQuery};
use crate::debranges::{
    self, builtin_fixture, default_probes, DBOperator, Fixture, H1GridSpec, HalfPlane,
    KernelCombo, MembershipReport,
};
use crate::error::{Error, Result};
use crate::factor::{self, Factorization, Side};
use crate::json::{
    complex_json, matrix_json, parse_combo, parse_matpoly, parse_operator, DBOperatorJson,
    MatPolyJson,
};
use crate::linalg::{self, c, cr, CVec, C64};
use crate::matfun::{ElemFactor, FactorMode, MatFun, MatPoly};
use crate::quad::QuadConfig;
use crate::spectral;

#[derive(Parser)]
#[command(
    name = "debranges",
    version,
    about = "Zeros, multiplicative factorizations and reproducing-kernel checks \
             for matrix polynomials and polynomial de Branges pairs"
)]
struct Cli {
    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    verb: Verb,
}

/// Input source shared by most verbs: a JSON file or a built-in fixture.
#[derive(Args, Clone)]
struct SourceArgs {
    /// Input JSON file (matrix polynomial or pair, depending on the verb).
    #[arg(long = "in", value_name = "FILE", conflicts_with = "fixture", required_unless_present = "fixture")]
    input: Option<PathBuf>,

    /// Built-in fixture name instead of an input file
    /// (scalar-cayley, diag-2, joint-real-zero, nilpotent-jordan).
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,
}

/// Adaptive axis-quadrature tuning, shared by the integral-based verbs.
#[derive(Args, Clone)]
struct QuadArgs {
    /// Initial half-width of the core integration window.
    #[arg(long, default_value_t = 8.0)]
    t0: f64,

    /// Window-doubling budget before an integral is declared divergent.
    #[arg(long, default_value_t = 12)]
    max_doublings: u32,

    /// Relative agreement required between consecutive window sizes.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,

    /// Gauss-Legendre nodes per panel.
    #[arg(long, default_value_t = 32)]
    nodes_per_panel: usize,
}

impl QuadArgs {
    fn config(&self) -> QuadConfig {
        QuadConfig {
            t0: self.t0,
            max_doublings: self.max_doublings,
            rel_tol: self.rel_tol,
            nodes_per_panel: self.nodes_per_panel,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeArg {
    Plain,
    Canonical,
}

impl ModeArg {
    fn mode(self) -> FactorMode {
        match self {
            ModeArg::Plain => FactorMode::Plain,
            ModeArg::Canonical => FactorMode::Canonical,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum SideArg {
    Left,
    Right,
}

impl SideArg {
    fn side(self) -> Side {
        match self {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Cluster the determinant zeros of a matrix polynomial, with
    /// multiplicities and cokernel defects.
    Zeros {
        #[command(flatten)]
        source: SourceArgs,

        /// Radius below which nearby eigenvalues merge into one zero.
        #[arg(long, default_value_t = spectral::DEFAULT_CLUSTER_RADIUS)]
        cluster_radius: f64,
    },

    /// Factor a matrix polynomial into elementary factors from a base point.
    Factor {
        #[command(flatten)]
        source: SourceArgs,

        /// Base point of the elementary factors, "re[,im]".
        #[arg(long = "base", value_parser = parse_complex, default_value = "0", allow_hyphen_values = true)]
        z0: C64,

        /// Which side the elementary factors multiply on.
        #[arg(long, value_enum, default_value_t = SideArg::Left)]
        side: SideArg,

        /// Plain factors I - tP or determinant-normalized canonical factors.
        #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
        mode: ModeArg,

        /// Number of verification grid points.
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },

    /// Factor a matrix polynomial at its real zeros only, choosing an
    /// off-axis base point automatically.
    FactorReal {
        #[command(flatten)]
        source: SourceArgs,

        #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
        mode: ModeArg,

        #[arg(long, default_value_t = 100)]
        grid: usize,
    },

    /// Split a pair (E-, E+) as N * (E0-, E0+) where N collects the common
    /// real zeros and the base pair has none left.
    FactorJoint {
        #[command(flatten)]
        source: SourceArgs,

        #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
        mode: ModeArg,

        #[arg(long, default_value_t = 100)]
        grid: usize,
    },

    /// Run the admissibility checks for a pair on a reference grid.
    VerifyH1 {
        #[command(flatten)]
        source: SourceArgs,

        /// Normalized tolerance for the grid inequalities.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },

    /// Evaluate the reproducing kernel K_w(z) of a pair.
    Kernel {
        #[command(flatten)]
        source: SourceArgs,

        /// Kernel parameter w, "re[,im]".
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        w: C64,

        /// Evaluation point z, "re[,im]".
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        z: C64,
    },

    /// Gram matrix of kernel sections at the given points and its smallest
    /// eigenvalue (positive semidefiniteness check).
    Gram {
        #[command(flatten)]
        source: SourceArgs,

        /// Semicolon-separated points, e.g. "0,1;0.5,1.5;-1.5,0.8". Section j
        /// uses the standard basis vector e_{j mod n}.
        #[arg(long, default_value = "0,1;0.5,1.5;-1.5,0.8", allow_hyphen_values = true)]
        points: String,
    },

    /// Space inner product of two kernel combinations by axis quadrature,
    /// compared against the exact reproducing-identity value.
    Inner {
        #[command(flatten)]
        source: SourceArgs,

        /// Kernel combination JSON file for the left argument.
        #[arg(long, value_name = "FILE")]
        f: PathBuf,

        /// Kernel combination JSON file for the right argument (defaults to f).
        #[arg(long, value_name = "FILE")]
        g: Option<PathBuf>,

        #[command(flatten)]
        quad: QuadArgs,
    },

    /// Factor a pair jointly, then verify that multiplication by the factor
    /// embeds the base space isometrically.
    EmbedCheck {
        #[command(flatten)]
        source: SourceArgs,

        #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
        mode: ModeArg,

        /// Number of sample elements of the base space.
        #[arg(long, default_value_t = 3)]
        samples: usize,

        #[command(flatten)]
        quad: QuadArgs,
    },

    /// Hardy-membership test for a candidate associated function S.
    AssocCheck {
        #[command(flatten)]
        source: SourceArgs,

        /// S spec: "identity", "eplus", "eminus", "kernel-i", or a matrix
        /// polynomial JSON file.
        #[arg(long, default_value = "identity")]
        s: String,

        /// Anchor point where S must be invertible, "re[,im]".
        #[arg(long, value_parser = parse_complex, default_value = "0,1", allow_hyphen_values = true)]
        alpha: C64,

        /// Factor the pair first and test N * S as a lift from the base pair
        /// (S is then interpreted on the base pair).
        #[arg(long)]
        lift: bool,

        /// Factorization mode used when --lift is set.
        #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
        mode: ModeArg,

        #[command(flatten)]
        quad: QuadArgs,
    },

    /// Residual of the resolvent identity
    /// R_alpha - R_beta = (alpha - beta) R_alpha R_beta on sample points.
    Resolvent {
        #[command(flatten)]
        source: SourceArgs,

        /// S spec, as for assoc-check.
        #[arg(long, default_value = "identity")]
        s: String,

        #[arg(long, value_parser = parse_complex, default_value = "0,1", allow_hyphen_values = true)]
        alpha: C64,

        #[arg(long, value_parser = parse_complex, default_value = "0.5,-0.5", allow_hyphen_values = true)]
        beta: C64,

        /// Number of spiral sample points.
        #[arg(long, default_value_t = 12)]
        samples: usize,
    },

    /// Emit a built-in fixture as JSON.
    Fixtures {
        /// Fixture name (scalar-cayley, diag-2, joint-real-zero,
        /// nilpotent-jordan).
        name: String,

        /// Also write the bare fixture JSON (without the report envelope) to
        /// this file.
        #[arg(long, value_name = "FILE")]
        write: Option<PathBuf>,
    },
}

impl Verb {
    fn name(&self) -> &'static str {
        match self {
            Verb::Zeros { .. } => "zeros",
            Verb::Factor { .. } => "factor",
            Verb::FactorReal { .. } => "factor-real",
            Verb::FactorJoint { .. } => "factor-joint",
            Verb::VerifyH1 { .. } => "verify-h1",
            Verb::Kernel { .. } => "kernel",
            Verb::Gram { .. } => "gram",
            Verb::Inner { .. } => "inner",
            Verb::EmbedCheck { .. } => "embed-check",
            Verb::AssocCheck { .. } => "assoc-check",
            Verb::Resolvent { .. } => "resolvent",
            Verb::Fixtures { .. } => "fixtures",
        }
    }
}

fn parse_complex(s: &str) -> std::result::Result<C64, String> {
    let parts: Vec<&str> = s.trim().split(',').collect();
    let parse = |t: &str| -> std::result::Result<f64, String> {
        t.trim().parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}"))
    };
    match parts.as_slice() {
        [re] => Ok(cr(parse(re)?)),
        [re, im] => Ok(c(parse(re)?, parse(im)?)),
        _ => Err("expected \"re\" or \"re,im\"".into()),
    }
}

fn parse_points(s: &str) -> Result<Vec<C64>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_complex(t).map_err(Error::Parse))
        .collect()
}

/// Accumulates the raw bytes of every input in argument order.
struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    fn new() -> Self {
        Inputs { hasher: Sha256::new() }
    }

    fn file(&mut self, path: &Path) -> Result<String> {
        let text = std::fs::read_to_string(path)?;
        self.hasher.update(text.as_bytes());
        Ok(text)
    }

    fn tag(&mut self, s: &str) {
        self.hasher.update(s.as_bytes());
    }

    fn digest(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

fn load_poly(src: &SourceArgs, inputs: &mut Inputs) -> Result<MatPoly> {
    if let Some(path) = &src.input {
        return parse_matpoly(&inputs.file(path)?);
    }
    let name = src.fixture.as_deref().unwrap_or_default();
    inputs.tag(name);
    match builtin_fixture(name)? {
        Fixture::Poly(a) => Ok(a),
        Fixture::Pair(_) => {
            Err(Error::Domain(format!("fixture {name} is a pair; this verb needs a matrix polynomial")))
        }
    }
}

fn load_pair(src: &SourceArgs, inputs: &mut Inputs) -> Result<DBOperator> {
    if let Some(path) = &src.input {
        return parse_operator(&inputs.file(path)?);
    }
    let name = src.fixture.as_deref().unwrap_or_default();
    inputs.tag(name);
    match builtin_fixture(name)? {
        Fixture::Pair(e) => Ok(e),
        Fixture::Poly(_) => {
            Err(Error::Domain(format!("fixture {name} is a matrix polynomial, not a pair")))
        }
    }
}

/// Resolves an S spec against a pair.
fn parse_s_spec(spec: &str, e: &DBOperator, inputs: &mut Inputs) -> Result<MatFun> {
    match spec {
        "identity" => Ok(MatFun::identity(e.dim())),
        "eplus" => Ok(e.e_plus().clone()),
        "eminus" => Ok(e.e_minus().clone()),
        "kernel-i" => Ok(MatFun::Poly(e.kernel_poly(c(0.0, 1.0))?)),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Parse(format!(
                    "S spec {spec:?} is not identity/eplus/eminus/kernel-i and no such file exists"
                )));
            }
            Ok(MatFun::Poly(parse_matpoly(&inputs.file(p)?)?))
        }
    }
}

// ---------------------------------------------------------------------------
// Payload builders.

fn elem_factor_json(b: &ElemFactor) -> Value {
    json!({
        "zk": complex_json(b.zero()),
        "rank": b.projection().rank(),
        "P": matrix_json(b.projection().matrix()),
        "order": b.order(),
    })
}

/// Extracts the elementary factors from a pure product of them; `None` when
/// the function has any other shape.
fn extract_factors(f: &MatFun) -> Option<Vec<&ElemFactor>> {
    match f {
        MatFun::Factor(b) => Some(vec![b]),
        MatFun::Poly(p) if p.degree() == 0 => Some(vec![]),
        MatFun::Product(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    MatFun::Factor(b) => out.push(b),
                    _ => return None,
                }
            }
            Some(out)
        }
        _ => None,
    }
}

fn factorization_payload(f: &Factorization, a: &MatPoly, grid: usize) -> Result<(bool, Value)> {
    let points = f.default_grid(grid);
    let max_resid = f.verify_against(a, &points)?;
    let invertibility = f.residual_invertibility()?;
    let pass = max_resid <= 1e-8 && invertibility >= factor::INVERTIBILITY_RATIO;
    let payload = json!({
        "side": f.side.as_str(),
        "mode": f.mode.as_str(),
        "base": complex_json(f.base),
        "factors": f.factors.iter().map(elem_factor_json).collect::<Vec<_>>(),
        "residual_kind": assoc::s_kind_label(&f.residual),
        "verification": {
            "max_resid": max_resid,
            "grid_points": points.len(),
            "residual_invertibility": invertibility,
        },
    });
    Ok((pass, payload))
}

fn membership_json(m: &MembershipReport) -> Value {
    json!({
        "half_plane": match m.half_plane { HalfPlane::Upper => "upper", HalfPlane::Lower => "lower" },
        "norm": m.norm,
        "pass": m.pass,
        "entries": m.entries.iter().map(|en| json!({
            "probe": complex_json(en.probe),
            "reproduction": en.reproduction,
            "annihilation": en.annihilation,
            "pass": en.pass,
            "note": en.note,
        })).collect::<Vec<_>>(),
    })
}

fn assoc_json(r: &assoc::AssocReport) -> Value {
    json!({
        "S_kind": r.s_kind,
        "alpha": complex_json(r.alpha),
        "pass": r.pass,
        "upper_checks": r.upper.iter().map(membership_json).collect::<Vec<_>>(),
        "lower_checks": r.lower.iter().map(membership_json).collect::<Vec<_>>(),
        "base": r.base.as_ref().map(|b| assoc_json(b)),
    })
}

// ---------------------------------------------------------------------------
// Verb handlers. Each returns (pass, payload).

fn run_zeros(source: &SourceArgs, cluster_radius: f64, inputs: &mut Inputs) -> Result<(bool, Value)> {
    let a = load_poly(source, inputs)?;
    let records = spectral::zeros(&a, cluster_radius)?;
    let payload = json!({
        "cluster_radius": cluster_radius,
        "count": records.len(),
        "zeros": records.iter().map(|r| json!({
            "z": complex_json(r.z),
            "mult": r.mult,
            "defect": r.defect,
        })).collect::<Vec<_>>(),
    });
    Ok((true, payload))
}

fn run_factor(
    source: &SourceArgs,
    z0: C64,
    side: Side,
    mode: FactorMode,
    grid: usize,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let a = load_poly(source, inputs)?;
    let f = factor::factor_global(&a, z0, side, mode)?;
    factorization_payload(&f, &a, grid)
}

fn run_factor_real(
    source: &SourceArgs,
    mode: FactorMode,
    grid: usize,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let a = load_poly(source, inputs)?;
    let f = factor::factor_real(&a, mode)?;
    factorization_payload(&f, &a, grid)
}

fn run_factor_joint(
    source: &SourceArgs,
    mode: FactorMode,
    grid: usize,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let (n_fun, e0) = factor::factor_joint(&e, mode)?;
    let mut max_resid: f64 = 0.0;
    for z in linalg::spiral_grid(linalg::ZERO, 2.0, grid.max(1)) {
        let nv = n_fun.eval(z)?;
        for (lhs, rhs) in [
            (e.eval_plus(z)?, &nv * e0.eval_plus(z)?),
            (e.eval_minus(z)?, &nv * e0.eval_minus(z)?),
        ] {
            let resid = linalg::frob(&(&lhs - &rhs)) / (1.0 + linalg::frob(&lhs));
            max_resid = max_resid.max(resid);
        }
    }
    let factors = extract_factors(&n_fun);
    let base_pair = match e0.poly_components() {
        Some((em, ep)) => json!({
            "polynomial": true,
            "pair": {
                "n": e0.dim(),
                "E_minus": serde_json::to_value(MatPolyJson::from_matpoly(em))
                    .map_err(|er| Error::Numerical(er.to_string()))?,
                "E_plus": serde_json::to_value(MatPolyJson::from_matpoly(ep))
                    .map_err(|er| Error::Numerical(er.to_string()))?,
            },
        }),
        None => json!({
            "polynomial": false,
            "components": [assoc::s_kind_label(e0.e_minus()), assoc::s_kind_label(e0.e_plus())],
        }),
    };
    let pass = max_resid <= 1e-8;
    let payload = json!({
        "mode": mode.as_str(),
        "n_factor": {
            "kind": assoc::s_kind_label(&n_fun),
            "factors": factors.map(|fs| fs.into_iter().map(elem_factor_json).collect::<Vec<_>>()),
        },
        "base_pair": base_pair,
        "verification": { "max_resid": max_resid, "grid_points": grid },
    });
    Ok((pass, payload))
}

fn run_verify_h1(source: &SourceArgs, tol: f64, inputs: &mut Inputs) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let report = debranges::validate_h1(&e, &H1GridSpec::default(), tol)?;
    let payload = json!({
        "tol": tol,
        "pass": report.pass(),
        "checks": report.checks.iter().map(|chk| json!({
            "name": chk.name,
            "pass": chk.pass,
            "margin": chk.margin,
            "witness": chk.witness.map(complex_json),
        })).collect::<Vec<_>>(),
    });
    Ok((report.pass(), payload))
}

fn run_kernel(source: &SourceArgs, w: C64, z: C64, inputs: &mut Inputs) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let k = e.kernel(w, z)?;
    let payload = json!({
        "w": complex_json(w),
        "z": complex_json(z),
        "confluent": (z - w.conj()).norm() < debranges::KERNEL_CONFLUENT_RADIUS,
        "matrix": matrix_json(&k),
    });
    Ok((true, payload))
}

fn run_gram(source: &SourceArgs, points: &str, inputs: &mut Inputs) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let pts = parse_points(points)?;
    if pts.is_empty() {
        return Err(Error::Parse("gram needs at least one point".into()));
    }
    let n = e.dim();
    let terms: Vec<(C64, CVec)> = pts
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let mut u = CVec::zeros(n);
            u[j % n] = linalg::ONE;
            (w, u)
        })
        .collect();
    let g = debranges::gram(&e, &terms)?;
    let eigs = linalg::hermitian_eigenvalues(&g);
    let min_eig = eigs.first().copied().unwrap_or(0.0);
    let max_eig = eigs.last().copied().unwrap_or(0.0);
    let pass = min_eig >= -1e-8 * max_eig.max(1.0);
    let payload = json!({
        "points": pts.iter().map(|&p| complex_json(p)).collect::<Vec<_>>(),
        "gram": matrix_json(&g),
        "min_eig": min_eig,
        "max_eig": max_eig,
        "pass": pass,
    });
    Ok((pass, payload))
}

fn run_inner(
    source: &SourceArgs,
    f_path: &Path,
    g_path: Option<&Path>,
    quad: &QuadConfig,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let f = parse_combo(&inputs.file(f_path)?, e.dim())?;
    let g = match g_path {
        Some(p) => parse_combo(&inputs.file(p)?, e.dim())?,
        None => f.clone(),
    };
    let qv = debranges::inner_product_quadrature(&e, &f, &g, quad)?;
    // Reproducing identity: <f, sum_j K_{w_j} u_j> = sum_j u_j^* f(w_j).
    let mut exact = linalg::ZERO;
    for (w, u) in &g.terms {
        exact += linalg::inner(&f.eval(&e, *w)?, u);
    }
    let err = (qv.value - exact).norm();
    let pass = err <= (10.0 * quad.rel_tol * (1.0 + exact.norm())).max(1e-8);
    let payload = json!({
        "value": complex_json(qv.value),
        "exact": complex_json(exact),
        "abs_error": err,
        "doublings": qv.doublings,
        "half_width": qv.half_width,
        "pass": pass,
    });
    Ok((pass, payload))
}

fn run_embed_check(
    source: &SourceArgs,
    mode: FactorMode,
    samples: usize,
    quad: &QuadConfig,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let (n_fun, e0) = factor::factor_joint(&e, mode)?;
    let n = e.dim();
    let combos: Vec<KernelCombo> = (0..samples.max(1))
        .map(|k| {
            let kf = k as f64;
            let mut u1 = CVec::zeros(n);
            u1[k % n] = linalg::ONE;
            let mut u2 = CVec::zeros(n);
            u2[(k + 1) % n] = c(0.4, -0.3);
            KernelCombo::new(vec![
                (c(0.3 * kf - 0.5, 1.0 + 0.25 * kf), u1),
                (c(0.4 - 0.2 * kf, 0.8), u2),
            ])
        })
        .collect();
    let report = debranges::embed_check(&n_fun, &e0, &e, &combos, quad)?;
    let payload = json!({
        "mode": mode.as_str(),
        "pass": report.pass,
        "entries": report.entries.iter().map(|en| json!({
            "norm_base": en.norm_base,
            "norm_embedded": en.norm_embedded,
            "rel_residual": en.rel_residual,
            "pass": en.pass,
        })).collect::<Vec<_>>(),
    });
    Ok((report.pass, payload))
}

fn run_assoc_check(
    source: &SourceArgs,
    s_spec: &str,
    alpha: C64,
    lift: bool,
    mode: FactorMode,
    quad: &QuadConfig,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let up = default_probes(HalfPlane::Upper);
    let lo = default_probes(HalfPlane::Lower);
    let report = if lift {
        let (n_fun, e0) = factor::factor_joint(&e, mode)?;
        let s0 = parse_s_spec(s_spec, &e0, inputs)?;
        let q0 = AssociatedQuery::new(s0, alpha, e0)?;
        assoc::lift_associated(&n_fun, &q0, &e, &up, &lo, quad)?
    } else {
        let s = parse_s_spec(s_spec, &e, inputs)?;
        let q = AssociatedQuery::new(s, alpha, e)?;
        assoc::associated_check(&q, &up, &lo, quad)?
    };
    Ok((report.pass, assoc_json(&report)))
}

fn run_resolvent(
    source: &SourceArgs,
    s_spec: &str,
    alpha: C64,
    beta: C64,
    samples: usize,
    inputs: &mut Inputs,
) -> Result<(bool, Value)> {
    let e = load_pair(source, inputs)?;
    let s = parse_s_spec(s_spec, &e, inputs)?;
    let n = e.dim();
    let mut u1 = CVec::zeros(n);
    u1[0] = linalg::ONE;
    let mut u2 = CVec::zeros(n);
    u2[n - 1] = c(0.2, 0.7);
    let f = KernelCombo::new(vec![(c(0.0, 2.0), u1), (c(-1.0, 1.5), u2)]);
    let q = AssociatedQuery::new(s, alpha, e)?;
    let pts = linalg::spiral_grid(linalg::ZERO, 2.5, samples.max(1));
    let max_residual = assoc::resolvent_identity_check(&q, beta, &f, &pts)?;
    let pass = max_residual <= 1e-8;
    let payload = json!({
        "alpha": complex_json(alpha),
        "beta": complex_json(beta),
        "samples": pts.len(),
        "max_residual": max_residual,
        "pass": pass,
    });
    Ok((pass, payload))
}

fn run_fixtures(name: &str, write: Option<&Path>, inputs: &mut Inputs) -> Result<(bool, Value)> {
    inputs.tag(name);
    let (kind, content) = match builtin_fixture(name)? {
        Fixture::Pair(e) => {
            let j = DBOperatorJson::from_operator(&e)?;
            ("pair", serde_json::to_value(j).map_err(|er| Error::Numerical(er.to_string()))?)
        }
        Fixture::Poly(a) => {
            let j = MatPolyJson::from_matpoly(&a);
            ("matrix-polynomial", serde_json::to_value(j).map_err(|er| Error::Numerical(er.to_string()))?)
        }
    };
    if let Some(path) = write {
        let text = serde_json::to_string_pretty(&content)
            .map_err(|er| Error::Numerical(er.to_string()))?;
        std::fs::write(path, text.as_bytes())?;
    }
    let payload = json!({ "name": name, "kind": kind, "content": content });
    Ok((true, payload))
}

fn dispatch(verb: &Verb, inputs: &mut Inputs) -> Result<(bool, Value)> {
    match verb {
        Verb::Zeros { source, cluster_radius } => run_zeros(source, *cluster_radius, inputs),
        Verb::Factor { source, z0, side, mode, grid } => {
            run_factor(source, *z0, side.side(), mode.mode(), *grid, inputs)
        }
        Verb::FactorReal { source, mode, grid } => {
            run_factor_real(source, mode.mode(), *grid, inputs)
        }
        Verb::FactorJoint { source, mode, grid } => {
            run_factor_joint(source, mode.mode(), *grid, inputs)
        }
        Verb::VerifyH1 { source, tol } => run_verify_h1(source, *tol, inputs),
        Verb::Kernel { source, w, z } => run_kernel(source, *w, *z, inputs),
        Verb::Gram { source, points } => run_gram(source, points, inputs),
        Verb::Inner { source, f, g, quad } => {
            run_inner(source, f, g.as_deref(), &quad.config(), inputs)
        }
        Verb::EmbedCheck { source, mode, samples, quad } => {
            run_embed_check(source, mode.mode(), *samples, &quad.config(), inputs)
        }
        Verb::AssocCheck { source, s, alpha, lift, mode, quad } => {
            run_assoc_check(source, s, *alpha, *lift, mode.mode(), &quad.config(), inputs)
        }
        Verb::Resolvent { source, s, alpha, beta, samples } => {
            run_resolvent(source, s, *alpha, *beta, *samples, inputs)
        }
        Verb::Fixtures { name, write } => run_fixtures(name, write.as_deref(), inputs),
    }
}

fn emit_report(
    verb: &str,
    outcome: Result<(bool, Value)>,
    digest: String,
    started: Instant,
    out: Option<&Path>,
) -> i32 {
    let timing_ms = started.elapsed().as_secs_f64() * 1e3;
    let (status, payload, code) = match outcome {
        Ok((true, payload)) => ("pass", payload, 0),
        Ok((false, payload)) => ("fail", payload, 1),
        Err(e) => {
            let code = e.exit_code();
            ("error", json!({ "error": e.to_string() }), code)
        }
    };
    let report = json!({
        "verb": verb,
        "status": status,
        "payload": payload,
        "timing_ms": timing_ms,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "input_digest": digest,
    });
    let text = serde_json::to_string_pretty(&report)
        .unwrap_or_else(|_| "{\"status\": \"error\"}".into());
    println!("{text}");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, text.as_bytes()) {
            eprintln!("failed to write report to {}: {e}", path.display());
            return if code == 0 { 2 } else { code };
        }
    }
    code
}

/// Entry point: parses arguments, runs the verb, prints the report, and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let started = Instant::now();
    let mut inputs = Inputs::new();
    let verb = cli.verb.name();
    let outcome = dispatch(&cli.verb, &mut inputs);
    emit_report(verb, outcome, inputs.digest(), started, cli.out.as_deref())
}
