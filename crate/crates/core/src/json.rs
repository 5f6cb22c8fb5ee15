//! JSON wire formats. Complex scalars are `[re, im]` pairs everywhere; a
//! matrix polynomial is `{"n": dim, "coeffs": [block0, block1, ...]}` with
//! each block a row-major matrix of `[re, im]` entries. Values emitted by the
//! library re-parse to bit-identical coefficients.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::debranges::{DBOperator, KernelCombo};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::matfun::MatPoly;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatPolyJson {
    pub n: usize,
    pub coeffs: Vec<Vec<Vec<[f64; 2]>>>,
}

impl MatPolyJson {
    pub fn from_matpoly(p: &MatPoly) -> Self {
        let n = p.dim();
        let coeffs = p
            .coeffs()
            .iter()
            .map(|c| {
                (0..n)
                    .map(|i| (0..n).map(|j| [c[(i, j)].re, c[(i, j)].im]).collect())
                    .collect()
            })
            .collect();
        MatPolyJson { n, coeffs }
    }

    pub fn to_matpoly(&self) -> Result<MatPoly> {
        if self.n == 0 {
            return Err(Error::Parse("matrix dimension must be positive".into()));
        }
        let mut blocks = Vec::with_capacity(self.coeffs.len());
        for (k, block) in self.coeffs.iter().enumerate() {
            if block.len() != self.n || block.iter().any(|row| row.len() != self.n) {
                return Err(Error::Parse(format!("coefficient {k} is not a {0}x{0} matrix", self.n)));
            }
            let m = CMat::from_fn(self.n, self.n, |i, j| C64::new(block[i][j][0], block[i][j][1]));
            blocks.push(m);
        }
        MatPoly::new(self.n, blocks)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DBOperatorJson {
    pub n: usize,
    #[serde(rename = "E_minus")]
    pub e_minus: MatPolyJson,
    #[serde(rename = "E_plus")]
    pub e_plus: MatPolyJson,
}

impl DBOperatorJson {
    pub fn from_operator(e: &DBOperator) -> Result<Self> {
        let (em, ep) = e.poly_components().ok_or_else(|| {
            Error::Domain("only polynomial pairs have a JSON form".into())
        })?;
        Ok(DBOperatorJson {
            n: e.dim(),
            e_minus: MatPolyJson::from_matpoly(em),
            e_plus: MatPolyJson::from_matpoly(ep),
        })
    }

    pub fn to_operator(&self) -> Result<DBOperator> {
        let em = self.e_minus.to_matpoly()?;
        let ep = self.e_plus.to_matpoly()?;
        if em.dim() != self.n || ep.dim() != self.n {
            return Err(Error::Parse("pair components disagree with the declared dimension".into()));
        }
        DBOperator::from_polys(em, ep)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelTermJson {
    pub w: [f64; 2],
    pub u: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelComboJson {
    pub terms: Vec<KernelTermJson>,
}

impl KernelComboJson {
    pub fn from_combo(f: &KernelCombo) -> Self {
        KernelComboJson {
            terms: f
                .terms
                .iter()
                .map(|(w, u)| KernelTermJson {
                    w: [w.re, w.im],
                    u: u.iter().map(|c| [c.re, c.im]).collect(),
                })
                .collect(),
        }
    }

    pub fn to_combo(&self, dim: usize) -> Result<KernelCombo> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.u.len() != dim {
                return Err(Error::Parse(format!(
                    "combination vector has length {}, expected {dim}",
                    t.u.len()
                )));
            }
            let u = CVec::from_fn(dim, |i, _| C64::new(t.u[i][0], t.u[i][1]));
            terms.push((C64::new(t.w[0], t.w[1]), u));
        }
        Ok(KernelCombo::new(terms))
    }
}

pub fn parse_matpoly(text: &str) -> Result<MatPoly> {
    let parsed: MatPolyJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("matrix polynomial: {e}")))?;
    parsed.to_matpoly()
}

pub fn parse_operator(text: &str) -> Result<DBOperator> {
    let parsed: DBOperatorJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("pair: {e}")))?;
    parsed.to_operator()
}

pub fn parse_combo(text: &str, dim: usize) -> Result<KernelCombo> {
    let parsed: KernelComboJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("kernel combination: {e}")))?;
    parsed.to_combo(dim)
}

// ---------------------------------------------------------------------------
// Report building blocks (serde_json values, deterministic key order).

pub fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn matrix_json(m: &CMat) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| {
            let row: Vec<Value> = (0..m.ncols()).map(|j| complex_json(m[(i, j)])).collect();
            Value::Array(row)
        })
        .collect();
    Value::Array(rows)
}

pub fn vector_json(v: &CVec) -> Value {
    Value::Array(v.iter().map(|&c| complex_json(c)).collect())
}
