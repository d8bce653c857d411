//! Exact two-phase simplex over arbitrary-precision rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::domain::ConstraintSystem;
use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Exact value of a finite float.
pub fn to_rational(x: f64) -> Result<Rational> {
    BigRational::from_float(x).ok_or(Error::NotANumber)
}

/// Nearest float (ties and overflow handled by the float conversion).
pub fn rational_to_f64(q: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or_else(|| if q.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

pub fn rational_from_int(k: i64) -> Rational {
    BigRational::from_integer(BigInt::from(k))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: Rational, point: Vec<Rational> },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }
}

/// Serializable summary of an [`LpOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LpSummary {
    Optimal { value: String, approx: f64 },
    Unbounded,
    Infeasible,
}

impl From<&LpOutcome> for LpSummary {
    fn from(o: &LpOutcome) -> Self {
        match o {
            LpOutcome::Optimal { value, .. } => LpSummary::Optimal { value: value.to_string(), approx: rational_to_f64(value) },
            LpOutcome::Unbounded => LpSummary::Unbounded,
            LpOutcome::Infeasible => LpSummary::Infeasible,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    ncols: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> &Rational {
        &self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for x in self.rows[r].iter_mut() {
            *x = &*x / &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *x = &*x - &f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost·x` with Bland's rule over the allowed columns.
    fn optimize(&mut self, cost: &[Rational], allowed: &[bool]) -> Phase {
        loop {
            let mut entering = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for (i, &bi) in self.basis.iter().enumerate() {
                    if !cost[bi].is_zero() && !self.rows[i][j].is_zero() {
                        rc -= &cost[bi] * &self.rows[i][j];
                    }
                }
                if rc.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Phase::Optimal };
            let mut leave: Option<(usize, Rational)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][c];
                if a.is_positive() {
                    let ratio = self.rhs(r) / a;
                    let better = match &leave {
                        None => true,
                        Some((lr, lv)) => ratio < *lv || (ratio == *lv && self.basis[r] < self.basis[*lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Phase::Unbounded };
            self.pivot(r, c);
        }
    }
}

/// `min cᵀv + d` subject to `A v <= b`, `v` free.
pub fn lp_min_exact(c: &[Rational], d: &Rational, a: &[Vec<Rational>], b: &[Rational]) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.len();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: b.len() });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: row.len() });
    }
    // columns: v+ (n), v- (n), slack (m), artificial (one per negative rhs)
    let neg: Vec<usize> = (0..m).filter(|&i| b[i].is_negative()).collect();
    let ncols = 2 * n + m + neg.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i].is_negative() { -Rational::one() } else { Rational::one() };
        let mut row = vec![Rational::zero(); ncols + 1];
        for j in 0..n {
            row[j] = &sign * &a[i][j];
            row[n + j] = -&row[j];
        }
        row[2 * n + i] = sign.clone();
        row[ncols] = &sign * &b[i];
        if b[i].is_negative() {
            let col = 2 * n + m + art;
            row[col] = Rational::one();
            basis.push(col);
            art += 1;
        } else {
            basis.push(2 * n + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, ncols };
    let is_art = |j: usize| j >= 2 * n + m;

    if !neg.is_empty() {
        let cost: Vec<Rational> =
            (0..ncols).map(|j| if is_art(j) { Rational::one() } else { Rational::zero() }).collect();
        let allowed = vec![true; ncols];
        tab.optimize(&cost, &allowed);
        let infeas: Rational = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &bj)| is_art(bj))
            .map(|(r, _)| tab.rhs(r).clone())
            .sum();
        if infeas.is_positive() {
            return Ok(LpOutcome::Infeasible);
        }
        let mut r = 0;
        while r < tab.rows.len() {
            if is_art(tab.basis[r]) {
                match (0..2 * n + m).find(|&j| !tab.rows[r][j].is_zero()) {
                    Some(j) => {
                        tab.pivot(r, j);
                        r += 1;
                    }
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    let mut cost = vec![Rational::zero(); ncols];
    for j in 0..n {
        cost[j] = c[j].clone();
        cost[n + j] = -&c[j];
    }
    let allowed: Vec<bool> = (0..ncols).map(|j| !is_art(j)).collect();
    if let Phase::Unbounded = tab.optimize(&cost, &allowed) {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![Rational::zero(); ncols];
    for (r, &bj) in tab.basis.iter().enumerate() {
        x[bj] = tab.rhs(r).clone();
    }
    let point: Vec<Rational> = (0..n).map(|j| &x[j] - &x[n + j]).collect();
    let value = point.iter().zip(c).map(|(v, c)| v * c).sum::<Rational>() + d;
    Ok(LpOutcome::Optimal { value, point })
}

/// Float front end: the data is converted exactly.
pub fn lp_min_system(c: &[f64], d: f64, sys: &ConstraintSystem) -> Result<LpOutcome> {
    let c = c.iter().map(|&x| to_rational(x)).collect::<Result<Vec<_>>>()?;
    let a = sys
        .a()
        .iter()
        .map(|r| r.iter().map(|&x| to_rational(x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let b = sys.b().iter().map(|&x| to_rational(x)).collect::<Result<Vec<_>>>()?;
    lp_min_exact(&c, &to_rational(d)?, &a, &b)
}

/// Exact emptiness test of `{v | A v <= b}`.
pub fn is_feasible(sys: &ConstraintSystem) -> bool {
    let c = vec![0.0; sys.n_vars()];
    !matches!(lp_min_system(&c, 0.0, sys), Ok(LpOutcome::Infeasible))
}
