//! Templates, abstract elements, constraint systems and box extraction.
//!
//! An abstract element over template `T` is the set `{v | T v >= c}`; a bound
//! of `-inf` omits its row. Constraint systems use the opposite orientation,
//! `A v <= b`.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtScalar;

/// Tolerance used by [`membership`].
pub const EPS_MEMBER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Interval,
    Zones,
    Octagon,
    Custom,
}

impl std::str::FromStr for TemplateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interval" | "box" => Ok(TemplateKind::Interval),
            "zones" | "zone" => Ok(TemplateKind::Zones),
            "octagon" | "octagons" => Ok(TemplateKind::Octagon),
            "custom" => Ok(TemplateKind::Custom),
            other => Err(Error::Config(format!("unknown template kind `{other}`"))),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemplateKind::Interval => "interval",
            TemplateKind::Zones => "zones",
            TemplateKind::Octagon => "octagon",
            TemplateKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A fixed matrix of constraint directions over named variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    rows: Vec<Vec<f64>>,
    var_names: Vec<String>,
    kind: TemplateKind,
}

fn check_names(var_names: &[String]) -> Result<()> {
    if var_names.is_empty() {
        return Err(Error::EmptyVariables);
    }
    let mut seen = HashSet::new();
    for name in var_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateVariable(name.clone()));
        }
    }
    Ok(())
}

fn unit(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut row = vec![0.0; n];
    for &(i, a) in entries {
        row[i] = a;
    }
    row
}

/// Builds the canonical template of a built-in kind.
///
/// Row order: for each variable `+v_i, -v_i`; then, for each pair `i < j` in
/// lexicographic order, the pairwise rows with the sign of `v_i` varying
/// slowest (`+,-`). Octagons use `v_i+v_j, v_i-v_j, -v_i+v_j, -v_i-v_j`;
/// zones use `v_i-v_j, -v_i+v_j`.
pub fn make_template<S: AsRef<str>>(kind: TemplateKind, var_names: &[S]) -> Result<Template> {
    let names: Vec<String> = var_names.iter().map(|s| s.as_ref().to_string()).collect();
    check_names(&names)?;
    if kind == TemplateKind::Custom {
        return Err(Error::InvalidTemplate(
            "custom templates are built with Template::custom".into(),
        ));
    }
    let n = names.len();
    let mut rows = Vec::new();
    for i in 0..n {
        rows.push(unit(n, &[(i, 1.0)]));
        rows.push(unit(n, &[(i, -1.0)]));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            match kind {
                TemplateKind::Interval | TemplateKind::Custom => break,
                TemplateKind::Zones => {
                    rows.push(unit(n, &[(i, 1.0), (j, -1.0)]));
                    rows.push(unit(n, &[(i, -1.0), (j, 1.0)]));
                }
                TemplateKind::Octagon => {
                    for si in [1.0, -1.0] {
                        for sj in [1.0, -1.0] {
                            rows.push(unit(n, &[(i, si), (j, sj)]));
                        }
                    }
                }
            }
        }
    }
    Ok(Template {
        rows,
        var_names: names,
        kind,
    })
}

impl Template {
    /// A user-supplied set of directions. Rows must be non-zero and distinct.
    pub fn custom<S: AsRef<str>>(rows: Vec<Vec<f64>>, var_names: &[S]) -> Result<Template> {
        let names: Vec<String> = var_names.iter().map(|s| s.as_ref().to_string()).collect();
        check_names(&names)?;
        for (idx, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::DimensionMismatch {
                    expected: names.len(),
                    found: row.len(),
                });
            }
            if row.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidTemplate(format!("row {idx} is not finite")));
            }
            if row.iter().all(|&a| a == 0.0) {
                return Err(Error::InvalidTemplate(format!("row {idx} is all zero")));
            }
            if rows[..idx].contains(row) {
                return Err(Error::InvalidTemplate(format!("row {idx} is a duplicate")));
            }
        }
        Ok(Template {
            rows,
            var_names: names,
            kind: TemplateKind::Custom,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Renders row `i` as a linear expression, e.g. `x - y`.
    pub fn row_expr(&self, i: usize) -> String {
        format_linear(&self.rows[i], &self.var_names)
    }
}

/// Formats `Σ a_j v_j` in the textual polynomial syntax (`0` if empty).
pub fn format_linear<S: AsRef<str>>(coeffs: &[f64], names: &[S]) -> String {
    let mut out = String::new();
    for (j, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let name = names[j].as_ref();
        let mag = a.abs();
        let body = if mag == 1.0 {
            name.to_string()
        } else {
            format!("{mag}*{name}")
        };
        if out.is_empty() {
            if a < 0.0 {
                out.push('-');
            }
        } else {
            out.push_str(if a < 0.0 { " - " } else { " + " });
        }
        out.push_str(&body);
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// `A v <= b`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSystem {
    n: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl ConstraintSystem {
    pub fn new(n: usize) -> Self {
        ConstraintSystem {
            n,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn from_rows(n: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        let mut sys = ConstraintSystem::new(n);
        for (row, rhs) in a.into_iter().zip(b) {
            sys.push(row, rhs)?;
        }
        Ok(sys)
    }

    /// Appends `row · v <= rhs`.
    pub fn push(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        if row.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: row.len(),
            });
        }
        self.a.push(row);
        self.b.push(rhs);
        Ok(())
    }

    /// Conjunction of two systems over the same variables.
    pub fn stack(&self, other: &ConstraintSystem) -> Result<ConstraintSystem> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let mut out = self.clone();
        out.a.extend(other.a.iter().cloned());
        out.b.extend(other.b.iter().copied());
        Ok(out)
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.a.iter().map(Vec::as_slice).zip(self.b.iter().copied())
    }

    /// Whether `point` satisfies every row up to `tol`.
    pub fn satisfied_by(&self, point: &[f64], tol: f64) -> bool {
        self.rows().all(|(row, b)| dot(row, point) <= b + tol)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: ExtScalar,
    pub hi: ExtScalar,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: ExtScalar::NegInf,
        hi: ExtScalar::PosInf,
    };

    pub fn new(lo: ExtScalar, hi: ExtScalar) -> Self {
        Interval { lo, hi }
    }

    pub fn finite(lo: f64, hi: f64) -> Self {
        Interval {
            lo: ExtScalar::Finite(lo),
            hi: ExtScalar::Finite(hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        ExtScalar::Finite(x) >= self.lo && ExtScalar::Finite(x) <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Per-variable bounds `l <= v <= u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    dims: Vec<Interval>,
}

impl IntervalBox {
    pub fn unbounded(n: usize) -> Self {
        IntervalBox {
            dims: vec![Interval::UNBOUNDED; n],
        }
    }

    pub fn from_intervals(dims: Vec<Interval>) -> Self {
        IntervalBox { dims }
    }

    pub fn dim(&self, i: usize) -> Interval {
        self.dims[i]
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len() && self.dims.iter().zip(point).all(|(d, &x)| d.contains(x))
    }
}

/// Absorbs every single-variable row into per-variable bounds.
///
/// Returns the box and the remaining rows unchanged. A row `a·x_i <= b` with
/// `a > 0` bounds `x_i` above by `b/a`; with `a < 0` it bounds `x_i` below.
/// Inexact quotients are rounded outward by one ulp.
pub fn extract_box(sys: &ConstraintSystem) -> Result<(IntervalBox, ConstraintSystem)> {
    let n = sys.n_vars();
    let mut lo = vec![ExtScalar::NegInf; n];
    let mut hi = vec![ExtScalar::PosInf; n];
    let mut reduced = ConstraintSystem::new(n);
    for (row, b) in sys.rows() {
        let mut nonzero = row.iter().enumerate().filter(|(_, &a)| a != 0.0);
        match (nonzero.next(), nonzero.next()) {
            (Some((i, &a)), None) => {
                let q = b / a;
                // sign of q·a − b, exact through the fused multiply-add
                let r = q.mul_add(a, -b);
                if a > 0.0 {
                    let q = if r < 0.0 { q.next_up() } else { q };
                    hi[i] = hi[i].min(ExtScalar::from(q));
                } else {
                    let q = if r < 0.0 { q.next_down() } else { q };
                    lo[i] = lo[i].max(ExtScalar::from(q));
                }
            }
            _ => reduced.push(row.to_vec(), b)?,
        }
    }
    for i in 0..n {
        if lo[i] > hi[i] {
            return Err(Error::Infeasible {
                var: i,
                lower: lo[i].to_f64(),
                upper: hi[i].to_f64(),
            });
        }
    }
    let dims = lo.into_iter().zip(hi).map(|(l, u)| Interval::new(l, u)).collect();
    Ok((IntervalBox { dims }, reduced))
}

/// `{T v >= c}` with one lower bound per template row.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractElement {
    template: Arc<Template>,
    bounds: Vec<ExtScalar>,
}

impl AbstractElement {
    pub fn new(template: Arc<Template>, bounds: Vec<ExtScalar>) -> Result<Self> {
        if bounds.len() != template.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: template.n_rows(),
                found: bounds.len(),
            });
        }
        if bounds.iter().any(|&c| c == ExtScalar::PosInf) {
            return Err(Error::InvalidTemplate(
                "+inf lower bounds are not representable".into(),
            ));
        }
        Ok(AbstractElement { template, bounds })
    }

    /// The unconstrained element.
    pub fn top(template: Arc<Template>) -> Self {
        let bounds = vec![ExtScalar::NegInf; template.n_rows()];
        AbstractElement { template, bounds }
    }

    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    pub fn bounds(&self) -> &[ExtScalar] {
        &self.bounds
    }

    pub fn bound(&self, i: usize) -> ExtScalar {
        self.bounds[i]
    }

    pub fn is_top(&self) -> bool {
        self.bounds.iter().all(|&c| c == ExtScalar::NegInf)
    }

    fn same_template(&self, other: &AbstractElement) -> Result<()> {
        if Arc::ptr_eq(&self.template, &other.template) || *self.template == *other.template {
            Ok(())
        } else {
            Err(Error::TemplateMismatch)
        }
    }

    /// Row-wise minimum of bounds (over-approximates the union).
    pub fn join(&self, other: &AbstractElement) -> Result<AbstractElement> {
        self.same_template(other)?;
        let bounds = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(&a, &b)| a.min(b))
            .collect();
        Ok(AbstractElement {
            template: self.template.clone(),
            bounds,
        })
    }

    /// Row-wise maximum of bounds (the intersection).
    pub fn meet(&self, other: &AbstractElement) -> Result<AbstractElement> {
        self.same_template(other)?;
        let bounds = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(&a, &b)| a.max(b))
            .collect();
        Ok(AbstractElement {
            template: self.template.clone(),
            bounds,
        })
    }

    /// Drops every row that mentions variable `var`.
    pub fn forget(&self, var: usize) -> AbstractElement {
        let bounds = self
            .bounds
            .iter()
            .zip(self.template.rows())
            .map(|(&c, row)| if row[var] != 0.0 { ExtScalar::NegInf } else { c })
            .collect();
        AbstractElement {
            template: self.template.clone(),
            bounds,
        }
    }

    /// Finite rows rendered as `expr >= bound`.
    pub fn constraint_strings(&self) -> Vec<String> {
        self.bounds
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.finite().map(|c| format!("{} >= {}", self.template.row_expr(i), c)))
            .collect()
    }
}

/// Converts `T v >= c` to `-T v <= -c`, dropping `-inf` rows.
pub fn element_to_constraints(a: &AbstractElement) -> ConstraintSystem {
    let t = a.template();
    let mut sys = ConstraintSystem::new(t.n_vars());
    for (row, c) in t.rows().iter().zip(a.bounds()) {
        if let Some(c) = c.finite() {
            sys.a.push(row.iter().map(|&x| -x).collect());
            sys.b.push(-c);
        }
    }
    sys
}

/// Whether `point` satisfies every finite row up to [`EPS_MEMBER`].
pub fn membership(a: &AbstractElement, point: &[f64]) -> Result<bool> {
    let t = a.template();
    if point.len() != t.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: t.n_vars(),
            found: point.len(),
        });
    }
    Ok(t.rows().iter().zip(a.bounds()).all(|(row, c)| match c.finite() {
        Some(c) => dot(row, point) >= c - EPS_MEMBER,
        None => true,
    }))
}

/// Row-level difference between two elements of one template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Comparison {
    pub strengthened: bool,
    pub new_constraint_count: usize,
    pub tightened_count: usize,
}

/// Compares raw bound vectors; no closure is applied first.
pub fn compare_elements(base: &AbstractElement, new: &AbstractElement) -> Result<Comparison> {
    base.same_template(new)?;
    let mut dominates = true;
    let mut strictly = false;
    let mut out = Comparison::default();
    for (&b, &c) in base.bounds().iter().zip(new.bounds()) {
        if c < b {
            dominates = false;
        }
        if c > b {
            strictly = true;
            if b == ExtScalar::NegInf {
                out.new_constraint_count += 1;
            } else {
                out.tightened_count += 1;
            }
        }
    }
    out.strengthened = dominates && strictly;
    Ok(out)
}
