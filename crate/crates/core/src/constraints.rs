//! Linear constraint systems `Aθ ≤ b`, active sets and the orthonormal
//! complement of the active rows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AcssError, Result};
use crate::model::{checked_svd, Matrix, Vector};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;
/// ℓ1-type catalogue entries enumerate sign vectors, so they stop here.
pub const MAX_SIGN_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    a: Matrix,
    b: Vector,
    kind: Option<String>,
}

/// The constraint catalogue. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Builtin {
    Nonnegativity,
    /// `θ_j ≥ c` for every j, or only for `indices`.
    LowerBound {
        c: f64,
        #[serde(default)]
        indices: Option<Vec<usize>>,
    },
    Monotone,
    LInf {
        c: f64,
    },
    L1 {
        c: f64,
    },
    FusedL1 {
        c: f64,
    },
}

impl Builtin {
    fn name(&self) -> &'static str {
        match self {
            Builtin::Nonnegativity => "nonnegativity",
            Builtin::LowerBound { .. } => "lower_bound",
            Builtin::Monotone => "monotone",
            Builtin::LInf { .. } => "l_inf",
            Builtin::L1 { .. } => "l1",
            Builtin::FusedL1 { .. } => "fused_l1",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

/// Row `k` of the `2^m × m` sign matrix.
fn sign_row(k: usize, m: usize) -> impl Iterator<Item = f64> {
    (0..m).map(move |j| if k >> j & 1 == 0 { 1.0 } else { -1.0 })
}

fn positive(c: f64) -> Result<f64> {
    if c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(invalid(format!("constraint radius must be positive, got {c}")))
    }
}

impl ConstraintSet {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(invalid(format!("A has {} rows but b has {} entries", a.nrows(), b.len())));
        }
        if a.ncols() == 0 {
            return Err(invalid("constraint dimension must be at least 1"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("constraints must be finite"));
        }
        if let Some(i) = (0..a.nrows()).find(|&i| a.row(i).iter().all(|&v| v == 0.0)) {
            return Err(invalid(format!("constraint row {i} is all zeros")));
        }
        Ok(ConstraintSet { a, b, kind: None })
    }

    pub fn unconstrained(d: usize) -> Self {
        ConstraintSet { a: Matrix::zeros(0, d), b: Vector::zeros(0), kind: None }
    }

    pub fn builtin(spec: &Builtin, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("constraint dimension must be at least 1"));
        }
        let (a, b) = match spec {
            Builtin::Nonnegativity => (-Matrix::identity(d, d), Vector::zeros(d)),
            Builtin::LowerBound { c, indices } => {
                let idx: Vec<usize> = indices.clone().unwrap_or_else(|| (0..d).collect());
                if idx.is_empty() || idx.iter().any(|&j| j >= d) {
                    return Err(invalid("lower-bound indices must be nonempty and below d"));
                }
                let mut a = Matrix::zeros(idx.len(), d);
                for (r, &j) in idx.iter().enumerate() {
                    a[(r, j)] = -1.0;
                }
                (a, Vector::from_element(idx.len(), -c))
            }
            Builtin::Monotone => {
                if d < 2 {
                    return Err(invalid("monotone constraint needs d >= 2"));
                }
                let mut a = Matrix::zeros(d - 1, d);
                for i in 0..d - 1 {
                    a[(i, i)] = 1.0;
                    a[(i, i + 1)] = -1.0;
                }
                (a, Vector::zeros(d - 1))
            }
            Builtin::LInf { c } => {
                let c = positive(*c)?;
                let mut a = Matrix::zeros(2 * d, d);
                for i in 0..d {
                    a[(i, i)] = 1.0;
                    a[(d + i, i)] = -1.0;
                }
                (a, Vector::from_element(2 * d, c))
            }
            Builtin::L1 { c } => {
                let c = positive(*c)?;
                if d > MAX_SIGN_DIM {
                    return Err(AcssError::Unsupported(format!(
                        "l1 constraint in dimension {d} needs 2^{d} rows; use the l1-penalized fit"
                    )));
                }
                let rows = 1usize << d;
                let a = Matrix::from_fn(rows, d, |k, j| sign_row(k, d).nth(j).unwrap());
                (a, Vector::from_element(rows, c))
            }
            Builtin::FusedL1 { c } => {
                let c = positive(*c)?;
                if d < 2 {
                    return Err(invalid("fused l1 constraint needs d >= 2"));
                }
                if d - 1 > MAX_SIGN_DIM {
                    return Err(AcssError::Unsupported(format!(
                        "fused l1 constraint in dimension {d} needs 2^{} rows; use the l1-penalized fit",
                        d - 1
                    )));
                }
                let m = d - 1;
                let rows = 1usize << m;
                let mut a = Matrix::zeros(rows, d);
                for k in 0..rows {
                    for (i, s) in sign_row(k, m).enumerate() {
                        a[(k, i)] += s;
                        a[(k, i + 1)] -= s;
                    }
                }
                (a, Vector::from_element(rows, c))
            }
        };
        let mut cs = ConstraintSet::new(a, b)?;
        cs.kind = Some(spec.name().to_string());
        Ok(cs)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Vector {
        &self.b
    }
    pub fn kind(&self) -> Option<&str> {
        self.kind.as_deref()
    }

    /// `b − Aθ`; nonnegative entries are satisfied rows.
    pub fn slack(&self, theta: &Vector) -> Vector {
        &self.b - &self.a * theta
    }

    pub fn is_feasible(&self, theta: &Vector, tol: f64) -> bool {
        self.slack(theta).iter().all(|&s| s >= -tol)
    }

    /// Rows with slack at most `tol_act`. Rows within `10·tol_act` are reported
    /// as borderline.
    pub fn active_set(&self, theta: &Vector, tol_act: f64) -> Result<ActiveSet> {
        if !(tol_act > 0.0) {
            return Err(invalid("tol_act must be positive"));
        }
        let slack = self.slack(theta);
        if let Some((row, s)) =
            slack.iter().enumerate().filter(|(_, &s)| s < -tol_act).min_by(|a, b| a.1.total_cmp(b.1))
        {
            return Err(AcssError::InfeasiblePoint { row, excess: -s });
        }
        Ok(ActiveSet::from_slack(&slack, tol_act))
    }

    /// Orthonormal basis of the complement of the span of the active rows.
    pub fn ortho_complement(&self, aset: &ActiveSet) -> OrthoBasis {
        ortho_complement_of_rows(&self.a, &aset.indices)
    }

    /// Per-coordinate bounds when every row is `±e_j`, as for the mixture.
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; d];
        let mut hi = vec![f64::INFINITY; d];
        for i in 0..self.n_rows() {
            let row = self.a.row(i);
            let nz: Vec<usize> = (0..d).filter(|&j| row[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let bound = self.b[i] / row[j];
            if row[j] > 0.0 {
                hi[j] = hi[j].min(bound);
            } else {
                lo[j] = lo[j].max(bound);
            }
        }
        Some((lo, hi))
    }

    pub fn to_json(&self) -> String {
        let doc = ConstraintDoc {
            a: (0..self.n_rows()).map(|i| self.a.row(i).iter().copied().collect()).collect(),
            b: self.b.iter().copied().collect(),
            kind: self.kind.clone(),
            dim: (self.n_rows() == 0).then_some(self.dim()),
        };
        serde_json::to_string(&doc).expect("constraint document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ConstraintDoc =
            serde_json::from_str(text).map_err(|e| AcssError::Parse { line: e.line(), msg: e.to_string() })?;
        if doc.a.is_empty() {
            let d = doc.dim.ok_or_else(|| invalid("empty constraint document needs \"dim\""))?;
            if !doc.b.is_empty() {
                return Err(invalid("b must be empty when A is"));
            }
            let mut cs = ConstraintSet::unconstrained(d);
            cs.kind = doc.kind;
            return Ok(cs);
        }
        let a = crate::model::matrix_from_rows(&doc.a)?;
        let mut cs = ConstraintSet::new(a, Vector::from_vec(doc.b))?;
        cs.kind = doc.kind;
        Ok(cs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    /// Strictly increasing row indices.
    pub indices: Vec<usize>,
    /// Inactive rows whose slack is within ten times the activity tolerance.
    pub borderline: Vec<usize>,
}

impl ActiveSet {
    pub fn from_slack(slack: &Vector, tol_act: f64) -> Self {
        let mut indices = Vec::new();
        let mut borderline = Vec::new();
        for (i, &s) in slack.iter().enumerate() {
            if s <= tol_act {
                indices.push(i);
            } else if s <= 10.0 * tol_act {
                borderline.push(i);
            }
        }
        ActiveSet { indices, borderline }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    /// d × (d − rank) with orthonormal columns.
    pub u: Matrix,
    pub rank: usize,
}

pub fn ortho_complement_of_rows(a: &Matrix, rows: &[usize]) -> OrthoBasis {
    let d = a.ncols();
    if rows.is_empty() {
        return OrthoBasis { u: Matrix::identity(d, d), rank: 0 };
    }
    // pad so the thin SVD returns all d right singular vectors
    let m = rows.len().max(d);
    let mut sub = Matrix::zeros(m, d);
    for (r, &i) in rows.iter().enumerate() {
        sub.row_mut(r).copy_from(&a.row(i));
    }
    let svd = checked_svd(&sub);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..d).filter(|&k| svd.singular_values[k] <= RANK_RTOL * smax).collect();
    let u = Matrix::from_fn(d, keep.len(), |i, j| vt[(keep[j], i)]);
    OrthoBasis { rank: d - keep.len(), u }
}
