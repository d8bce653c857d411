//! Parametric scalar maps: a polyhedral parameter space Θ and a lower-bound
//! function L on it, built from the Lagrangian dual of
//! `min f(v) s.t. A v <= b` with quadratic `f`.
//!
//! Construction peels single-variable rows into a box, introduces one
//! multiplier per remaining row, splits the linear coefficients across the
//! bilinear and square terms, and bounds each piece in closed form over the
//! box. Every coefficient is affine in θ, so every side condition is a row of
//! `M θ <= h`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{dot, extract_box, ConstraintSystem, Interval, IntervalBox};
use crate::error::{Error, Result};
use crate::ext::ExtScalar;
use crate::poly::QuadPoly;

/// Tolerance for membership in Θ.
pub const EPS_FEAS: f64 = 1e-9;

/// Relative slack subtracted from bounds whose evaluation rounded.
pub const EPS_OUT: f64 = 1e-9;

/// Relaxes a computed bound downward unless it was evaluated exactly.
pub fn outward_round(value: f64, exact: bool) -> f64 {
    if exact {
        value
    } else {
        value - EPS_OUT * value.abs().max(1.0)
    }
}

/// Records whether any floating-point operation rounded.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Tracker {
    pub inexact: bool,
}

impl Tracker {
    pub fn add(&mut self, a: f64, b: f64) -> f64 {
        let s = a + b;
        if s.is_finite() {
            let bb = s - a;
            let err = (a - (s - bb)) + (b - bb);
            if err != 0.0 {
                self.inexact = true;
            }
        }
        s
    }

    pub fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.add(a, -b)
    }

    pub fn mul(&mut self, a: f64, b: f64) -> f64 {
        let p = a * b;
        if p.is_finite() && a.mul_add(b, -p) != 0.0 {
            self.inexact = true;
        }
        p
    }

    pub fn div(&mut self, a: f64, b: f64) -> f64 {
        let q = a / b;
        if q.is_finite() && (-q).mul_add(b, a) != 0.0 {
            self.inexact = true;
        }
        q
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Whether `h - row·θ >= 0` holds for the exact reals. Products are split
/// into value and rounding error, then summed as a non-overlapping
/// expansion whose largest component carries the sign.
fn exact_slack_nonnegative(row: &[f64], theta: &[f64], h: f64) -> bool {
    let mut parts = vec![h];
    for (&a, &t) in row.iter().zip(theta) {
        let p = a * t;
        parts.push(-p);
        parts.push(-a.mul_add(t, -p));
    }
    if parts.iter().any(|x| !x.is_finite()) {
        return h - dot(row, theta) >= 0.0;
    }
    let mut expansion: Vec<f64> = Vec::with_capacity(parts.len());
    for x in parts {
        let mut q = x;
        let mut next = Vec::with_capacity(expansion.len() + 1);
        for &e in &expansion {
            let (s, err) = two_sum(q, e);
            if err != 0.0 {
                next.push(err);
            }
            q = s;
        }
        next.push(q);
        expansion = next;
    }
    expansion.iter().rev().find(|&&x| x != 0.0).map_or(true, |&x| x > 0.0)
}

/// `constant + Σ coef · θ[idx]`, indices ascending and unique.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { constant: c, terms: Vec::new() }
    }

    pub fn param(idx: usize) -> Self {
        Affine { constant: 0.0, terms: vec![(idx, 1.0)] }
    }

    fn from_dense(constant: f64, coeffs: &[f64]) -> Self {
        let terms = coeffs.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(i, &a)| (i, a)).collect();
        Affine { constant, terms }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * theta[i]).sum::<f64>()
    }

    fn eval_tracked(&self, theta: &[f64], tr: &mut Tracker) -> f64 {
        let mut acc = self.constant;
        for &(i, a) in &self.terms {
            let p = tr.mul(a, theta[i]);
            acc = tr.add(acc, p);
        }
        acc
    }

    /// Rate of change along direction `d`.
    pub fn slope(&self, d: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * d[i]).sum()
    }

    fn accumulate(&self, scale: f64, grad: &mut [f64]) {
        if scale != 0.0 {
            for &(i, a) in &self.terms {
                grad[i] += scale * a;
            }
        }
    }

    fn dense(&self, dim: usize) -> Vec<f64> {
        let mut row = vec![0.0; dim];
        self.accumulate(1.0, &mut row);
        row
    }

    fn scaled(&self, k: f64) -> Affine {
        Affine {
            constant: k * self.constant,
            terms: self.terms.iter().map(|&(i, a)| (i, k * a)).collect(),
        }
    }

    /// Renders with parameter labels, e.g. `1 - lambda0 + 2*S[x]`.
    pub fn render(&self, labels: &[String]) -> String {
        let mut out = String::new();
        if self.constant != 0.0 || self.terms.is_empty() {
            let _ = write!(out, "{}", self.constant);
        }
        for &(i, a) in &self.terms {
            let neg = a < 0.0;
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if a.abs() == 1.0 {
                out.push_str(&labels[i]);
            } else {
                let _ = write!(out, "{}*{}", a.abs(), labels[i]);
            }
        }
        out
    }
}

/// Canonical coordinate layout: multipliers, then square splits (ascending
/// variable), then bilinear splits (ascending pair, `i`-side before `k`-side).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamLayout {
    pub n_lambda: usize,
    pub squares: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        self.n_lambda + self.squares.len() + 2 * self.pairs.len()
    }

    pub fn lambda_index(&self, j: usize) -> usize {
        j
    }

    /// Index of `S_var`, if the variable has a square term.
    pub fn s_index(&self, var: usize) -> Option<usize> {
        self.squares.iter().position(|&v| v == var).map(|p| self.n_lambda + p)
    }

    /// Index of `D_ik^{side}` where `side` is `i` or `k`.
    pub fn d_index(&self, i: usize, k: usize, side: usize) -> Option<usize> {
        let p = self.pairs.iter().position(|&pk| pk == (i, k))?;
        let base = self.n_lambda + self.squares.len() + 2 * p;
        if side == i {
            Some(base)
        } else if side == k {
            Some(base + 1)
        } else {
            None
        }
    }

    pub fn labels<S: AsRef<str>>(&self, names: &[S]) -> Vec<String> {
        let mut out: Vec<String> = (0..self.n_lambda).map(|j| format!("lambda{j}")).collect();
        out.extend(self.squares.iter().map(|&v| format!("S[{}]", names[v].as_ref())));
        for &(i, k) in &self.pairs {
            let (a, b) = (names[i].as_ref(), names[k].as_ref());
            out.push(format!("D[{a},{b}].{a}"));
            out.push(format!("D[{a},{b}].{b}"));
        }
        out
    }
}

/// A point of the parameter space with layout-aware accessors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(layout: &ParamLayout) -> Self {
        ParamVector(vec![0.0; layout.dim()])
    }

    pub fn lambda<'a>(&'a self, layout: &ParamLayout) -> &'a [f64] {
        &self.0[..layout.n_lambda]
    }

    pub fn s<'a>(&'a self, layout: &ParamLayout) -> &'a [f64] {
        &self.0[layout.n_lambda..layout.n_lambda + layout.squares.len()]
    }

    pub fn d<'a>(&'a self, layout: &ParamLayout) -> &'a [f64] {
        &self.0[layout.n_lambda + layout.squares.len()..]
    }

    /// `Δ_var = Σ_k D_{var,k}^{var}`.
    pub fn delta(&self, layout: &ParamLayout, var: usize) -> f64 {
        layout
            .pairs
            .iter()
            .filter(|&&(i, k)| i == var || k == var)
            .map(|&(i, k)| self.0[layout.d_index(i, k, var).expect("pair holds var")])
            .sum()
    }
}

/// Result of a feasibility query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violation: f64,
    pub penalty_grad: Vec<f64>,
}

/// `Θ = {θ | M θ <= h}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpace {
    dim: usize,
    m: Vec<Vec<f64>>,
    h: Vec<f64>,
    infeasible: bool,
}

impl ParamSpace {
    fn new(dim: usize) -> Self {
        ParamSpace { dim, m: Vec::new(), h: Vec::new(), infeasible: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn is_flagged_infeasible(&self) -> bool {
        self.infeasible
    }

    fn contradiction(&mut self) {
        if !self.infeasible {
            self.infeasible = true;
            self.m.push(vec![0.0; self.dim]);
            self.h.push(-1.0);
        }
    }

    /// Adds `expr <= 0`; rows without parameters are decided on the spot.
    fn push_le_zero(&mut self, expr: &Affine) {
        if expr.terms.iter().all(|&(_, a)| a == 0.0) {
            if expr.constant > 0.0 {
                self.contradiction();
            }
            return;
        }
        self.m.push(expr.dense(self.dim));
        self.h.push(-expr.constant);
    }

    /// Removes row `i` (test fixtures).
    pub fn remove_row(&mut self, i: usize) {
        self.m.remove(i);
        self.h.remove(i);
    }

    /// Row slacks `h - M θ`.
    pub fn slacks(&self, theta: &[f64]) -> Vec<f64> {
        self.m.iter().zip(&self.h).map(|(row, &h)| h - dot(row, theta)).collect()
    }

    pub fn max_violation(&self, theta: &[f64]) -> f64 {
        if self.infeasible {
            return f64::INFINITY;
        }
        self.slacks(theta).into_iter().fold(0.0, |acc, s| acc.max(-s))
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        !self.infeasible && self.max_violation(theta) <= EPS_FEAS
    }

    /// Membership without tolerance, decided in exact arithmetic.
    pub fn contains_exactly(&self, theta: &[f64]) -> bool {
        !self.infeasible && self.m.iter().zip(&self.h).all(|(row, &h)| exact_slack_nonnegative(row, theta, h))
    }

    /// Feasibility, `‖max(Mθ−h, 0)‖_p` and its gradient (`p ∈ {1, 2}`).
    pub fn feasibility(&self, theta: &[f64], p: u32) -> Feasibility {
        if self.infeasible {
            return Feasibility {
                feasible: false,
                violation: f64::INFINITY,
                penalty_grad: vec![0.0; self.dim],
            };
        }
        let resid: Vec<f64> = self.slacks(theta).into_iter().map(|s| (-s).max(0.0)).collect();
        let mut grad = vec![0.0; self.dim];
        let violation = if p == 1 {
            for (row, &r) in self.m.iter().zip(&resid) {
                if r > 0.0 {
                    grad.iter_mut().zip(row).for_each(|(g, a)| *g += a);
                }
            }
            resid.iter().sum()
        } else {
            let norm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (row, &r) in self.m.iter().zip(&resid) {
                    if r > 0.0 {
                        grad.iter_mut().zip(row).for_each(|(g, a)| *g += a * r / norm);
                    }
                }
            }
            norm
        };
        let feasible = resid.iter().all(|&r| r <= EPS_FEAS);
        Feasibility { feasible, violation, penalty_grad: grad }
    }
}

/// One closed-form subproblem of the decomposed dual.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `min k·v_var` over the variable's interval.
    Linear { var: usize, k: Affine, dom: Interval },
    /// `min a·v² + b·v` over the variable's interval.
    Square { var: usize, a: f64, b: Affine, dom: Interval },
    /// `min a·v_i·v_k + b·v_i + c·v_k` over the box, in product form
    /// `(a v_i + c)(v_k + b/a) − bc/a`. `clamp` records which sign conditions
    /// (`u2<=0`, `u1<=0`, `l2>=0`, `l1>=0`) were imposed.
    Bilinear {
        i: usize,
        k: usize,
        a: f64,
        b: Affine,
        c: Affine,
        dom_i: Interval,
        dom_k: Interval,
        clamp: [bool; 4],
    },
}

/// Value, exactness and θ-gradient of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub exact: bool,
    pub grad: Vec<f64>,
}

impl Evaluation {
    /// The value relaxed by [`outward_round`].
    pub fn sound_value(&self) -> f64 {
        outward_round(self.value, self.exact)
    }
}

/// `(Θ, L)` for one objective over one constraint system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParametricScalarMap {
    theta_space: ParamSpace,
    objective: QuadPoly,
    #[serde(rename = "box")]
    bx: IntervalBox,
    reduced: ConstraintSystem,
    layout: ParamLayout,
    terms: Vec<Term>,
    constant: Affine,
}

fn ext_mul(a: ExtScalar, b: ExtScalar, tr: &mut Tracker) -> ExtScalar {
    match (a, b) {
        (ExtScalar::Finite(x), ExtScalar::Finite(y)) => ExtScalar::Finite(tr.mul(x, y)),
        _ => a.mul(b),
    }
}

/// A bound of an induced product factor with its derivative in `(B, C)`.
#[derive(Debug, Clone, Copy)]
struct Factor {
    v: ExtScalar,
    d_b: f64,
    d_c: f64,
}

impl Factor {
    fn constant(v: f64) -> Self {
        Factor { v: ExtScalar::Finite(v), d_b: 0.0, d_c: 0.0 }
    }
    fn min(self, o: Factor) -> Factor {
        if o.v < self.v {
            o
        } else {
            self
        }
    }
    fn max(self, o: Factor) -> Factor {
        if o.v > self.v {
            o
        } else {
            self
        }
    }
}

struct TermValue {
    value: f64,
    d_b: f64,
    d_c: f64,
}

fn linear_term(k: f64, dom: Interval, tr: &mut Tracker) -> (f64, f64) {
    match (dom.lo, dom.hi) {
        (ExtScalar::Finite(l), ExtScalar::Finite(u)) => {
            if k >= 0.0 {
                (tr.mul(k, l), l)
            } else {
                (tr.mul(k, u), u)
            }
        }
        (ExtScalar::NegInf, ExtScalar::Finite(u)) => (tr.mul(k, u), u),
        (ExtScalar::Finite(l), ExtScalar::PosInf) => (tr.mul(k, l), l),
        _ => (0.0, 0.0),
    }
}

fn square_term(a: f64, b: f64, dom: Interval, tr: &mut Tracker) -> (f64, f64) {
    let at = |e: f64, tr: &mut Tracker| {
        let ae = tr.mul(a, e);
        let q = tr.add(ae, b);
        tr.mul(q, e)
    };
    if a > 0.0 {
        let two_a = 2.0 * a;
        let v_star = -tr.div(b, two_a);
        let e = if ExtScalar::Finite(v_star) < dom.lo {
            dom.lo.finite().expect("v* below a finite lower end")
        } else if ExtScalar::Finite(v_star) > dom.hi {
            dom.hi.finite().expect("v* above a finite upper end")
        } else {
            v_star
        };
        (at(e, tr), e)
    } else {
        let (l, u) = (dom.lo.finite().unwrap_or(0.0), dom.hi.finite().unwrap_or(0.0));
        let (vl, vu) = (at(l, tr), at(u, tr));
        if vu < vl {
            (vu, u)
        } else {
            (vl, l)
        }
    }
}

fn bilinear_term(a: f64, b: f64, c: f64, dom_i: Interval, dom_k: Interval, clamp: [bool; 4], tr: &mut Tracker) -> TermValue {
    let end_i = |e: ExtScalar, tr: &mut Tracker| match e {
        ExtScalar::Finite(x) => {
            let ax = tr.mul(a, x);
            ExtScalar::Finite(tr.add(ax, c))
        }
        inf => inf.scale(a),
    };
    let p1a = Factor { v: end_i(dom_i.lo, tr), d_b: 0.0, d_c: 1.0 };
    let p1b = Factor { v: end_i(dom_i.hi, tr), d_b: 0.0, d_c: 1.0 };
    let (mut l1, mut u1) = if a > 0.0 { (p1a, p1b) } else { (p1b, p1a) };
    let shift = tr.div(b, a);
    let end_k = |e: ExtScalar, tr: &mut Tracker| match e {
        ExtScalar::Finite(x) => ExtScalar::Finite(tr.add(x, shift)),
        inf => inf,
    };
    let mut l2 = Factor { v: end_k(dom_k.lo, tr), d_b: 1.0 / a, d_c: 0.0 };
    let mut u2 = Factor { v: end_k(dom_k.hi, tr), d_b: 1.0 / a, d_c: 0.0 };
    let zero = Factor::constant(0.0);
    if clamp[0] {
        u2 = u2.min(zero);
        l2 = l2.min(u2);
    }
    if clamp[2] {
        l2 = l2.max(zero);
        u2 = u2.max(l2);
    }
    if clamp[1] {
        u1 = u1.min(zero);
        l1 = l1.min(u1);
    }
    if clamp[3] {
        l1 = l1.max(zero);
        u1 = u1.max(l1);
    }
    let mut best: Option<(ExtScalar, f64, f64)> = None;
    for (p, q) in [(l1, l2), (l1, u2), (u1, l2), (u1, u2)] {
        let prod = ext_mul(p.v, q.v, tr);
        let (db, dc) = match (p.v, q.v) {
            (ExtScalar::Finite(x), ExtScalar::Finite(y)) => (p.d_b * y + x * q.d_b, p.d_c * y + x * q.d_c),
            _ => (0.0, 0.0),
        };
        if best.map_or(true, |(v, _, _)| prod < v) {
            best = Some((prod, db, dc));
        }
    }
    let (prod, db, dc) = best.expect("four corners");
    let bc = tr.mul(b, c);
    let bc_a = tr.div(bc, a);
    let value = match prod {
        ExtScalar::Finite(x) => tr.sub(x, bc_a),
        other => other.to_f64(),
    };
    TermValue { value, d_b: db - c / a, d_c: dc - b / a }
}

/// Builds the parametric scalar map of `min f` over `sys`.
///
/// Fails with [`Error::Infeasible`] when the single-variable rows already
/// contradict each other.
pub fn build_psm(f: &QuadPoly, sys: &ConstraintSystem) -> Result<ParametricScalarMap> {
    let n = f.n_vars();
    if sys.n_vars() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sys.n_vars() });
    }
    let (bx, reduced) = extract_box(sys)?;
    let layout = ParamLayout {
        n_lambda: reduced.len(),
        squares: f.square().keys().copied().collect(),
        pairs: f.bilinear().keys().copied().collect(),
    };
    let dim = layout.dim();
    let mut space = ParamSpace::new(dim);
    for j in 0..layout.n_lambda {
        let mut row = vec![0.0; dim];
        row[j] = -1.0;
        space.m.push(row);
        space.h.push(0.0);
    }

    let mut terms = Vec::new();
    // Residual linear coefficients, accumulated densely over θ.
    let mut lin: Vec<Vec<f64>> = vec![vec![0.0; dim]; n];
    for (r, (row, _)) in reduced.rows().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            lin[j][r] += a;
        }
    }

    for (p, (&(i, k), &a)) in f.bilinear().iter().enumerate() {
        let bi = layout.n_lambda + layout.squares.len() + 2 * p;
        let (b, c) = (Affine::param(bi), Affine::param(bi + 1));
        lin[i][bi] -= 1.0;
        lin[k][bi + 1] -= 1.0;
        let (di, dk) = (bx.dim(i), bx.dim(k));
        let inf_l1 = if a > 0.0 { !di.lo.is_finite() } else { !di.hi.is_finite() };
        let inf_u1 = if a > 0.0 { !di.hi.is_finite() } else { !di.lo.is_finite() };
        let (inf_l2, inf_u2) = (!dk.lo.is_finite(), !dk.hi.is_finite());
        // Endpoints of v_i that realize l1 and u1 when finite.
        let e_l1 = if a > 0.0 { di.lo } else { di.hi };
        let e_u1 = if a > 0.0 { di.hi } else { di.lo };
        let mut clamp = [false; 4];
        if inf_l1 {
            if inf_u2 {
                space.contradiction();
            } else {
                // u2 = u_k + B/A <= 0
                let u_k = dk.hi.finite().expect("finite");
                let mut e = b.scaled(1.0 / a);
                e.constant += u_k;
                space.push_le_zero(&e);
                clamp[0] = true;
            }
        }
        if inf_l2 {
            if inf_u1 {
                space.contradiction();
            } else {
                // u1 = A e + C <= 0
                let mut e = c.clone();
                e.constant += a * e_u1.finite().expect("finite");
                space.push_le_zero(&e);
                clamp[1] = true;
            }
        }
        if inf_u1 {
            if inf_l2 {
                space.contradiction();
            } else {
                // l2 = l_k + B/A >= 0
                let l_k = dk.lo.finite().expect("finite");
                let mut e = b.scaled(-1.0 / a);
                e.constant -= l_k;
                space.push_le_zero(&e);
                clamp[2] = true;
            }
        }
        if inf_u2 {
            if inf_l1 {
                space.contradiction();
            } else {
                // l1 = A e + C >= 0
                let mut e = c.scaled(-1.0);
                e.constant -= a * e_l1.finite().expect("finite");
                space.push_le_zero(&e);
                clamp[3] = true;
            }
        }
        terms.push(Term::Bilinear { i, k, a, b, c, dom_i: di, dom_k: dk, clamp });
    }

    for (p, (&var, &a)) in f.square().iter().enumerate() {
        let si = layout.n_lambda + p;
        lin[var][si] -= 1.0;
        let dom = bx.dim(var);
        if a < 0.0 && !dom.is_bounded() {
            space.contradiction();
        }
        terms.push(Term::Square { var, a, b: Affine::param(si), dom });
    }

    for (var, coeffs) in lin.iter().enumerate() {
        let k = Affine::from_dense(f.linear_coeffs()[var], coeffs);
        let dom = bx.dim(var);
        match (dom.lo.is_finite(), dom.hi.is_finite()) {
            (true, true) => {}
            (false, true) => space.push_le_zero(&k),
            (true, false) => space.push_le_zero(&k.scaled(-1.0)),
            (false, false) => {
                space.push_le_zero(&k);
                space.push_le_zero(&k.scaled(-1.0));
            }
        }
        if k.constant != 0.0 || !k.terms.is_empty() {
            terms.push(Term::Linear { var, k, dom });
        }
    }

    let mut constant = Affine::constant(f.constant_term());
    constant.terms = reduced.b().iter().enumerate().filter(|(_, &b)| b != 0.0).map(|(j, &b)| (j, -b)).collect();

    Ok(ParametricScalarMap {
        theta_space: space,
        objective: f.clone(),
        bx,
        reduced,
        layout,
        terms,
        constant,
    })
}

impl ParametricScalarMap {
    pub fn theta_space(&self) -> &ParamSpace {
        &self.theta_space
    }

    /// Mutable access for constructing corrupted fixtures in tests.
    #[doc(hidden)]
    pub fn theta_space_mut(&mut self) -> &mut ParamSpace {
        &mut self.theta_space
    }

    pub fn objective(&self) -> &QuadPoly {
        &self.objective
    }

    pub fn interval_box(&self) -> &IntervalBox {
        &self.bx
    }

    pub fn reduced(&self) -> &ConstraintSystem {
        &self.reduced
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn constant_part(&self) -> &Affine {
        &self.constant
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn check_layout(&self, theta: &[f64]) -> Result<()> {
        if theta.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected: self.dim(), found: theta.len() })
        }
    }

    /// Evaluates the subproblem sum at any θ, ignoring membership in Θ.
    /// The result may be `-inf` far outside Θ.
    pub fn evaluate_unchecked(&self, theta: &[f64]) -> Evaluation {
        let mut tr = Tracker::default();
        let mut grad = vec![0.0; self.dim()];
        let mut value = self.constant.eval_tracked(theta, &mut tr);
        self.constant.accumulate(1.0, &mut grad);
        for term in &self.terms {
            let v = match term {
                Term::Linear { k, dom, .. } => {
                    let kv = k.eval_tracked(theta, &mut tr);
                    let (v, g) = linear_term(kv, *dom, &mut tr);
                    k.accumulate(g, &mut grad);
                    v
                }
                Term::Square { a, b, dom, .. } => {
                    let bv = b.eval_tracked(theta, &mut tr);
                    let (v, g) = square_term(*a, bv, *dom, &mut tr);
                    b.accumulate(g, &mut grad);
                    v
                }
                Term::Bilinear { a, b, c, dom_i, dom_k, clamp, .. } => {
                    let bv = b.eval_tracked(theta, &mut tr);
                    let cv = c.eval_tracked(theta, &mut tr);
                    let t = bilinear_term(*a, bv, cv, *dom_i, *dom_k, *clamp, &mut tr);
                    b.accumulate(t.d_b, &mut grad);
                    c.accumulate(t.d_c, &mut grad);
                    t.value
                }
            };
            value = tr.add(value, v);
        }
        Evaluation { value, exact: !tr.inexact, grad }
    }

    /// Value and gradient at θ, or `None` outside Θ.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Option<Evaluation>> {
        self.check_layout(theta)?;
        if !self.theta_space.contains(theta) {
            return Ok(None);
        }
        Ok(Some(self.evaluate_unchecked(theta)))
    }

    /// `L(θ)` on Θ and `-inf` elsewhere.
    pub fn eval_l(&self, theta: &[f64]) -> Result<ExtScalar> {
        Ok(match self.evaluate(theta)? {
            Some(e) => ExtScalar::new(e.value)?,
            None => ExtScalar::NegInf,
        })
    }

    /// Gradient of the active branch at θ ∈ Θ.
    pub fn grad_l(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(theta)?.map(|e| e.grad).ok_or(Error::OutsideParamSpace)
    }

    pub fn feasibility(&self, theta: &[f64], p: u32) -> Feasibility {
        self.theta_space.feasibility(theta, p)
    }

    /// Smallest `t > t_min` at which some subproblem switches branch along
    /// `θ + t d` (`inf` if none).
    pub fn first_kink(&self, theta: &[f64], d: &[f64], t_min: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut consider = |t: f64| {
            if t > t_min && t < best {
                best = t;
            }
        };
        for term in &self.terms {
            match term {
                Term::Linear { k, dom, .. } if dom.is_bounded() => {
                    let (k0, s) = (k.eval(theta), k.slope(d));
                    if k0 >= 0.0 && s < 0.0 {
                        consider(k0 / -s);
                    } else if k0 < 0.0 && s > 0.0 {
                        consider(-k0 / s);
                    }
                }
                Term::Square { a, b, dom, .. } if *a < 0.0 && dom.is_bounded() => {
                    let (l, u) = (dom.lo.to_f64(), dom.hi.to_f64());
                    // value(u) − value(l) as a function of t
                    let gap = a * (u * u - l * l) + b.eval(theta) * (u - l);
                    let s = b.slope(d) * (u - l);
                    if gap >= 0.0 && s < 0.0 {
                        consider(gap / -s);
                    } else if gap < 0.0 && s > 0.0 {
                        consider(-gap / s);
                    }
                }
                Term::Bilinear { a, b, c, dom_i, dom_k, .. } => {
                    let (b0, c0, bs, cs) = (b.eval(theta), c.eval(theta), b.slope(d), c.slope(d));
                    let mut corners = Vec::with_capacity(4);
                    for ei in [dom_i.lo, dom_i.hi] {
                        for ek in [dom_k.lo, dom_k.hi] {
                            if let (Some(x), Some(y)) = (ei.finite(), ek.finite()) {
                                corners.push((a * x * y + b0 * x + c0 * y, bs * x + cs * y));
                            }
                        }
                    }
                    let Some(&(v_act, s_act)) = corners.iter().min_by(|p, q| p.0.total_cmp(&q.0)) else {
                        continue;
                    };
                    for &(v, s) in &corners {
                        let (gap, rel) = (v - v_act, s - s_act);
                        if gap > 0.0 && rel < 0.0 {
                            consider(gap / -rel);
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// JSON debug view with human-readable coefficient tables.
    pub fn dump<S: AsRef<str>>(&self, names: &[S]) -> serde_json::Value {
        let labels = self.layout.labels(names);
        let name = |v: usize| names[v].as_ref().to_string();
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Linear { var, k, dom } => serde_json::json!({
                    "kind": "linear", "var": name(*var), "k": k.render(&labels), "interval": dom,
                }),
                Term::Square { var, a, b, dom } => serde_json::json!({
                    "kind": "square", "var": name(*var), "a": a, "b": b.render(&labels), "interval": dom,
                }),
                Term::Bilinear { i, k, a, b, c, dom_i, dom_k, clamp } => serde_json::json!({
                    "kind": "bilinear", "vars": [name(*i), name(*k)], "a": a,
                    "b": b.render(&labels), "c": c.render(&labels),
                    "intervals": [dom_i, dom_k], "sign_conditions": clamp,
                }),
            })
            .collect();
        let rows: Vec<String> = self
            .theta_space
            .m
            .iter()
            .zip(&self.theta_space.h)
            .map(|(row, h)| format!("{} <= {}", Affine::from_dense(0.0, row).render(&labels), h))
            .collect();
        serde_json::json!({
            "objective": self.objective.display_with(names),
            "parameters": labels,
            "box": self.bx,
            "reduced": { "a": self.reduced.a(), "b": self.reduced.b() },
            "theta_space": {
                "m": self.theta_space.m, "h": self.theta_space.h,
                "rows": rows, "infeasible": self.theta_space.infeasible,
            },
            "terms": terms,
            "constant": self.constant.render(&labels),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_quad;

    fn linear_example() -> ParametricScalarMap {
        let sys = ConstraintSystem::from_rows(
            2,
            vec![vec![1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
            vec![10.0, -1.0, 11.0, -1.0, 21.0],
        )
        .unwrap();
        build_psm(&parse_quad("y - x", &["x", "y"]).unwrap(), &sys).unwrap()
    }

    fn closed_form(l1: f64, l2: f64) -> f64 {
        let a = l1 + l2 - 1.0;
        let b = -l1 + l2 + 1.0;
        let c = l1 - 21.0 * l2;
        10.0 * a - 5.0 * b.abs() + 6.0 * b + c
    }

    #[test]
    fn linear_example_values() {
        let p = linear_example();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.eval_l(&[0.0, 0.0]).unwrap(), ExtScalar::Finite(-9.0));
        assert_eq!(p.eval_l(&[1.0, 0.0]).unwrap(), ExtScalar::Finite(1.0));
        for (l1, expect) in [(0.3, -6.0), (0.6, -3.0)] {
            let v = p.eval_l(&[l1, 0.0]).unwrap().to_f64();
            assert!((v - expect).abs() < 1e-9);
        }
        assert_eq!(p.eval_l(&[-1.0, 0.0]).unwrap(), ExtScalar::NegInf);
        for &(l1, l2) in &[(0.2, 0.1), (0.5, 0.4), (0.0, 0.9)] {
            let v = p.eval_l(&[l1, l2]).unwrap().to_f64();
            assert!((v - closed_form(l1, l2)).abs() < 1e-12);
        }
        assert_eq!(p.grad_l(&[0.0, 0.0]).unwrap(), vec![10.0, -10.0]);
    }

    #[test]
    fn linear_example_theta_space() {
        let p = linear_example();
        let f = p.feasibility(&[1.0, 0.5], 2);
        assert!(!f.feasible);
        assert!((f.violation - 0.5).abs() < 1e-12);
        assert_eq!(f.penalty_grad, vec![1.0, 1.0]);
        assert!(p.feasibility(&[0.0, 0.0], 2).feasible);
    }

    #[test]
    fn quadratic_example_structure() {
        let sys = ConstraintSystem::from_rows(
            2,
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![-1.0, -1.0], vec![-1.0, 1.0]],
            vec![0.0, 0.0, 16.0, 0.0, 16.0],
        )
        .unwrap();
        let p = build_psm(&parse_quad("x^2 - x", &["x", "y"]).unwrap(), &sys).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.eval_l(&[0.0, 0.0, 0.0]).unwrap(), ExtScalar::NegInf);
        let v = p.eval_l(&[0.0, 0.0, -1.0]).unwrap();
        assert_eq!(v, ExtScalar::Finite(-0.25));
        let g = p.grad_l(&[0.0, 0.0, -2.0]).unwrap();
        assert_eq!(g[2], 1.0);
    }

    #[test]
    fn constant_objective() {
        let p = build_psm(&QuadPoly::constant(2, 7.0), &ConstraintSystem::new(2)).unwrap();
        assert_eq!(p.dim(), 0);
        assert_eq!(p.eval_l(&[]).unwrap(), ExtScalar::Finite(7.0));
        assert_eq!(p.grad_l(&[]).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn concave_square_on_unbounded_interval_is_contradictory() {
        let sys = ConstraintSystem::from_rows(1, vec![vec![1.0]], vec![5.0]).unwrap();
        let p = build_psm(&parse_quad("-x^2", &["x"]).unwrap(), &sys).unwrap();
        assert!(p.theta_space().is_flagged_infeasible());
        assert_eq!(p.eval_l(&[0.0]).unwrap(), ExtScalar::NegInf);
        assert_eq!(p.feasibility(&[0.0], 2).violation, f64::INFINITY);
    }

    #[test]
    fn bilinear_corner_minimum() {
        let mut tr = Tracker::default();
        let v = bilinear_term(1.0, 0.0, 0.0, Interval::finite(0.0, 2.0), Interval::finite(0.0, 3.0), [false; 4], &mut tr);
        assert_eq!(v.value, 0.0);
        let v = bilinear_term(1.0, 0.0, 0.0, Interval::finite(-1.0, 2.0), Interval::finite(-1.0, 3.0), [false; 4], &mut tr);
        assert_eq!(v.value, -3.0);
    }

    #[test]
    fn bilinear_divergence_adds_sign_condition() {
        // x ∈ [0, ∞), y ∈ [-1, 3]: u1 = +∞ requires l2 = -1 + B >= 0
        let sys = ConstraintSystem::from_rows(
            2,
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0]],
            vec![0.0, 1.0, 3.0],
        )
        .unwrap();
        let p = build_psm(&parse_quad("x*y", &["x", "y"]).unwrap(), &sys).unwrap();
        assert_eq!(p.eval_l(&[0.0, 0.0]).unwrap(), ExtScalar::NegInf);
        let ts = p.theta_space();
        assert!(ts.m().iter().zip(ts.h()).any(|(row, &h)| row == &[-1.0, 0.0] && h == -1.0));
    }

    #[test]
    fn square_branches() {
        let mut tr = Tracker::default();
        let dom = Interval::new(ExtScalar::Finite(0.0), ExtScalar::PosInf);
        assert_eq!(square_term(1.0, -2.0, dom, &mut tr).0, -1.0);
        assert_eq!(square_term(1.0, 2.0, dom, &mut tr).0, 0.0);
        assert_eq!(square_term(1.0, 4.0, Interval::finite(0.0, 1.0), &mut tr).0, 0.0);
    }

    #[test]
    fn exactness_tracking() {
        let mut tr = Tracker::default();
        tr.add(1.0, 2.0);
        tr.mul(3.0, 0.5);
        assert!(!tr.inexact);
        tr.div(1.0, 3.0);
        assert!(tr.inexact);
        assert_eq!(outward_round(2.0, true), 2.0);
        assert!(outward_round(2.0, false) < 2.0);
    }

    #[test]
    fn exact_membership_sees_past_rounding() {
        // 1 + 2(1 - 2^-53) rounds to 3 but is below it
        let row = [-1.0, -2.0];
        let theta = [1.0, 1.0 - f64::EPSILON / 2.0];
        assert_eq!(-3.0 - (row[0] * theta[0] + row[1] * theta[1]), 0.0);
        assert!(!exact_slack_nonnegative(&row, &theta, -3.0));
        assert!(exact_slack_nonnegative(&[1.0, 2.0], &theta, 3.0));
        assert!(exact_slack_nonnegative(&[1.0, 2.0], &[1.0, 1.0], 3.0));
        assert!(exact_slack_nonnegative(&[0.1, 0.2], &[1.0, 1.0], 0.30000000000000004));
        assert!(!exact_slack_nonnegative(&[0.1, 0.2], &[1.0, 1.0], 0.3));
    }
}
