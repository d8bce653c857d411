//! Degree-≤2 polynomials and the general sparse polynomials used while
//! expanding substitutions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DegreeError, Error, Result};
use crate::eum::EffectiveUpdateMap;

/// Coefficients below this magnitude are dropped after collection.
pub const COEF_EPS: f64 = 1e-12;

/// A monomial as a sorted multiset of variable indices (empty = constant).
pub type Monomial = Vec<usize>;

/// A polynomial of arbitrary degree in collected sparse form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, d: f64) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(Vec::new(), d);
        p
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(vec![i], 1.0);
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    fn add_term(&mut self, mono: Monomial, coef: f64) {
        *self.terms.entry(mono).or_insert(0.0) += coef;
    }

    /// Drops non-constant monomials below [`COEF_EPS`] and exact-zero constants.
    fn collect(mut self) -> Self {
        self.terms
            .retain(|m, c| if m.is_empty() { *c != 0.0 } else { c.abs() >= COEF_EPS });
        self
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out.collect()
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), k * c);
        }
        out.collect()
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.n.max(other.n));
        for (m1, &c1) in &self.terms {
            for (m2, &c2) in &other.terms {
                let mut m: Monomial = m1.iter().chain(m2).copied().collect();
                m.sort_unstable();
                out.add_term(m, c1 * c2);
            }
        }
        out.collect()
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.n, point.len())?;
        Ok(self
            .terms
            .iter()
            .map(|(m, &c)| c * m.iter().map(|&i| point[i]).product::<f64>())
            .sum())
    }

    /// Replaces every variable `v` with `images[v]` and collects.
    pub fn compose(&self, images: &[Polynomial]) -> Polynomial {
        let n = images.first().map_or(self.n, Polynomial::n_vars);
        let mut out = Polynomial::zero(n);
        for (m, &c) in &self.terms {
            let mut acc = Polynomial::constant(n, c);
            for &v in m {
                acc = acc.mul(&images[v]);
            }
            out = out.add(&acc);
        }
        out.collect()
    }

    /// The highest-degree monomial above degree two, rendered with `names`.
    fn first_overflow(&self, names: Option<&[String]>) -> Option<(String, usize)> {
        self.terms
            .keys()
            .filter(|m| m.len() > 2)
            .max_by_key(|m| m.len())
            .map(|m| (render_monomial(m, names), m.len()))
    }

    /// Converts to [`QuadPoly`], failing if any monomial has degree > 2.
    pub fn to_quad(&self) -> std::result::Result<QuadPoly, DegreeError> {
        self.to_quad_named(None)
    }

    pub fn to_quad_named(&self, names: Option<&[String]>) -> std::result::Result<QuadPoly, DegreeError> {
        if let Some((monomial, degree)) = self.first_overflow(names) {
            return Err(DegreeError {
                monomial,
                degree,
                instruction: None,
            });
        }
        let mut q = QuadPoly::zero(self.n);
        for (m, &c) in &self.terms {
            match m.as_slice() {
                [] => q.d = c,
                [i] => q.c[*i] = c,
                [i, k] if i == k => {
                    q.q.insert(*i, c);
                }
                [i, k] => {
                    q.h.insert((*i, *k), c);
                }
                _ => unreachable!("degree checked above"),
            }
        }
        Ok(q)
    }
}

fn render_monomial(m: &[usize], names: Option<&[String]>) -> String {
    m.iter()
        .map(|&i| match names {
            Some(ns) => ns[i].clone(),
            None => format!("v{i}"),
        })
        .collect::<Vec<_>>()
        .join("*")
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `Σ_{i<k} H_ik v_i v_k + Σ_i Q_i v_i² + c·v + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadPoly {
    n: usize,
    h: BTreeMap<(usize, usize), f64>,
    q: BTreeMap<usize, f64>,
    c: Vec<f64>,
    d: f64,
}

impl QuadPoly {
    pub fn zero(n: usize) -> Self {
        QuadPoly {
            n,
            h: BTreeMap::new(),
            q: BTreeMap::new(),
            c: vec![0.0; n],
            d: 0.0,
        }
    }

    pub fn constant(n: usize, d: f64) -> Self {
        QuadPoly { d, ..QuadPoly::zero(n) }
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut p = QuadPoly::zero(n);
        p.c[i] = 1.0;
        p
    }

    /// `c·v + d`, with coefficients below [`COEF_EPS`] dropped.
    pub fn linear(c: Vec<f64>, d: f64) -> Self {
        let n = c.len();
        let c = c.into_iter().map(|x| if x.abs() < COEF_EPS { 0.0 } else { x }).collect();
        QuadPoly {
            n,
            h: BTreeMap::new(),
            q: BTreeMap::new(),
            c,
            d,
        }
    }

    /// Builds from raw parts; entries are collected into canonical form.
    pub fn from_parts(
        n: usize,
        bilinear: impl IntoIterator<Item = ((usize, usize), f64)>,
        square: impl IntoIterator<Item = (usize, f64)>,
        c: Vec<f64>,
        d: f64,
    ) -> Result<Self> {
        check_dim(n, c.len())?;
        let mut p = Polynomial::zero(n);
        for ((i, k), a) in bilinear {
            if i >= n || k >= n {
                return Err(Error::DimensionMismatch { expected: n, found: i.max(k) + 1 });
            }
            let mut m = vec![i, k];
            m.sort_unstable();
            p.add_term(m, a);
        }
        for (i, a) in square {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, found: i + 1 });
            }
            p.add_term(vec![i, i], a);
        }
        for (i, &a) in c.iter().enumerate() {
            p.add_term(vec![i], a);
        }
        p.add_term(Vec::new(), d);
        Ok(p.collect().to_quad().expect("inputs are at most quadratic"))
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    /// Bilinear coefficients keyed by `(i, k)` with `i < k`.
    pub fn bilinear(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.h
    }

    /// Square coefficients keyed by variable.
    pub fn square(&self) -> &BTreeMap<usize, f64> {
        &self.q
    }

    pub fn linear_coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn constant_term(&self) -> f64 {
        self.d
    }

    pub fn degree(&self) -> usize {
        if !self.h.is_empty() || !self.q.is_empty() {
            2
        } else if self.c.iter().any(|&x| x != 0.0) {
            1
        } else {
            0
        }
    }

    pub fn is_linear(&self) -> bool {
        self.degree() <= 1
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.n, point.len())?;
        let mut acc = self.d;
        for (&(i, k), &a) in &self.h {
            acc += a * point[i] * point[k];
        }
        for (&i, &a) in &self.q {
            acc += a * point[i] * point[i];
        }
        for (a, x) in self.c.iter().zip(point) {
            acc += a * x;
        }
        Ok(acc)
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let mut p = Polynomial::zero(self.n);
        for (&(i, k), &a) in &self.h {
            p.add_term(vec![i, k], a);
        }
        for (&i, &a) in &self.q {
            p.add_term(vec![i, i], a);
        }
        for (i, &a) in self.c.iter().enumerate() {
            p.add_term(vec![i], a);
        }
        p.add_term(Vec::new(), self.d);
        p.collect()
    }

    pub fn add(&self, other: &QuadPoly) -> QuadPoly {
        self.to_polynomial()
            .add(&other.to_polynomial())
            .to_quad()
            .expect("sum of quadratics is quadratic")
    }

    pub fn scale(&self, k: f64) -> QuadPoly {
        self.to_polynomial().scale(k).to_quad().expect("scaling keeps degree")
    }

    pub fn sub(&self, other: &QuadPoly) -> QuadPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &QuadPoly) -> std::result::Result<QuadPoly, DegreeError> {
        self.to_polynomial().mul(&other.to_polynomial()).to_quad()
    }

    /// Replaces each variable `v_j` by `σ(v_j)` and re-collects.
    pub fn substitute(&self, sigma: &EffectiveUpdateMap) -> std::result::Result<QuadPoly, DegreeError> {
        let images: Vec<Polynomial> = (0..self.n).map(|j| sigma.get(j).to_polynomial()).collect();
        self.to_polynomial().compose(&images).to_quad()
    }

    /// Renders in the textual syntax, e.g. `2*x*y - 3*x^2 + x + 4`.
    pub fn display_with<S: AsRef<str>>(&self, names: &[S]) -> String {
        let mut parts: Vec<(f64, String)> = Vec::new();
        for (&(i, k), &a) in &self.h {
            parts.push((a, format!("{}*{}", names[i].as_ref(), names[k].as_ref())));
        }
        for (&i, &a) in &self.q {
            parts.push((a, format!("{}^2", names[i].as_ref())));
        }
        for (i, &a) in self.c.iter().enumerate() {
            if a != 0.0 {
                parts.push((a, names[i].as_ref().to_string()));
            }
        }
        if self.d != 0.0 || parts.is_empty() {
            parts.push((self.d, String::new()));
        }
        let mut out = String::new();
        for (idx, (a, mono)) in parts.iter().enumerate() {
            let neg = *a < 0.0;
            if idx == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mag = a.abs();
            if mono.is_empty() {
                let _ = write!(out, "{mag}");
            } else if mag == 1.0 {
                out.push_str(mono);
            } else {
                let _ = write!(out, "{mag}*{mono}");
            }
        }
        out
    }
}

/// `Σ_j row_j · σ(v_j)`: the objective a template row induces after an update.
pub fn effective_objective(row: &[f64], sigma: &EffectiveUpdateMap) -> Result<QuadPoly> {
    check_dim(sigma.n_vars(), row.len())?;
    let mut acc = Polynomial::zero(row.len());
    for (j, &t) in row.iter().enumerate() {
        if t != 0.0 {
            acc = acc.add(&sigma.get(j).to_polynomial().scale(t));
        }
    }
    Ok(acc.to_quad().expect("linear combination of quadratics"))
}

/// Parses the textual syntax over the given variable names.
pub fn parse_quad<S: AsRef<str>>(text: &str, names: &[S]) -> Result<QuadPoly> {
    let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    let mut cur = crate::syntax::Cursor::new(text)?;
    let p = crate::syntax::parse_expr(&mut cur, &names)?;
    cur.expect_end()?;
    p.to_quad_named(Some(&names)).map_err(Error::from)
}
