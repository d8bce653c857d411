//! Gradient-guided search over a parametric scalar map.
//!
//! The search starts at θ = 0 (the interval-relaxation point), ascends the
//! objective while θ is feasible and descends the constraint-violation
//! penalty otherwise, keeping the best feasible iterate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtScalar;
use crate::par::{self, Exec};
use crate::psm::{outward_round, ParamVector, ParametricScalarMap, EPS_FEAS};

/// A differentiable score of a bound.
pub trait ScoreFn: Send + Sync + fmt::Debug {
    fn score(&self, bound: f64) -> f64;
    fn d_score(&self, bound: f64) -> f64;
}

#[derive(Debug, Clone, Default)]
pub enum Objective {
    /// `J = L`.
    #[default]
    Precision,
    /// `J = -max(0, target - L)`.
    Inclusion { target: f64 },
    Custom(Arc<dyn ScoreFn>),
}

impl Objective {
    pub fn score(&self, l: f64) -> f64 {
        match self {
            Objective::Precision => l,
            Objective::Inclusion { target } => -(target - l).max(0.0),
            Objective::Custom(f) => f.score(l),
        }
    }

    pub fn d_score(&self, l: f64) -> f64 {
        match self {
            Objective::Precision => 1.0,
            Objective::Inclusion { target } => {
                if l < *target {
                    1.0
                } else {
                    0.0
                }
            }
            Objective::Custom(f) => f.d_score(l),
        }
    }
}

/// How an iterate moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Feasible iterates follow the gradient projected onto the tangent cone
    /// of the active rows of Θ, for at most `eta` units and never past the
    /// next row of Θ or the next branch switch of L. Infeasible iterates
    /// move toward their Euclidean projection onto Θ, at most `eta * beta`
    /// units.
    #[default]
    Guarded,
    /// `θ += η ∇J` when feasible, `θ -= η β ∇‖max(Mθ−h,0)‖_p` otherwise.
    Literal,
}

impl std::str::FromStr for StepRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "guarded" => Ok(StepRule::Guarded),
            "literal" => Ok(StepRule::Literal),
            other => Err(Error::Config(format!("unknown step rule `{other}` (expected guarded or literal)"))),
        }
    }
}

impl std::fmt::Display for StepRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepRule::Guarded => "guarded",
            StepRule::Literal => "literal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggConfig {
    pub eta: f64,
    pub beta: f64,
    pub epochs: usize,
    pub p: u32,
    pub step_rule: StepRule,
}

impl Default for AggConfig {
    fn default() -> Self {
        AggConfig { eta: 0.5, beta: 10.0, epochs: 5, p: 2, step_rule: StepRule::Guarded }
    }
}

impl AggConfig {
    pub fn with_epochs(self, epochs: usize) -> Self {
        AggConfig { epochs, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.p != 1 && self.p != 2 {
            return Err(Error::Config(format!("p must be 1 or 2, got {}", self.p)));
        }
        Ok(())
    }
}

/// One evaluated iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub feasible: bool,
    pub bound: ExtScalar,
    pub score: Option<f64>,
    pub best_bound: ExtScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggResult {
    pub theta_best: ParamVector,
    /// `L` at the best feasible iterate, `-inf` if none was visited.
    pub bound_best: ExtScalar,
    /// `bound_best` relaxed for floating-point error; safe to report.
    pub sound_bound: ExtScalar,
    pub trace: Vec<EpochRecord>,
    /// Epochs executed before the iterate stopped moving.
    pub epochs_run: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Non-negative least squares `min ‖b − A μ‖, μ >= 0` (Lawson–Hanson).
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let q = a.ncols();
    let mut mu = DVector::zeros(q);
    let mut passive = vec![false; q];
    let scale = b.norm().max(1e-300) * a.norm().max(1e-300);
    let tol = 1e-12 * scale;
    for _ in 0..(3 * q + 10) {
        let w = a.transpose() * (b - a * &mu);
        let pick = (0..q).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else { break };
        passive[j] = true;
        for _ in 0..(3 * q + 10) {
            let idx: Vec<usize> = (0..q).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z_sub = match sub.clone().svd(true, true).solve(b, 1e-12) {
                Ok(z) => z,
                Err(_) => return mu,
            };
            let mut z = DVector::zeros(q);
            for (c, &j) in idx.iter().enumerate() {
                z[j] = z_sub[c];
            }
            if idx.iter().all(|&j| z[j] > 0.0) {
                mu = z;
                break;
            }
            let alpha = idx
                .iter()
                .filter(|&&j| z[j] <= 0.0)
                .map(|&j| mu[j] / (mu[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            mu += (z - &mu) * alpha;
            for &j in &idx {
                if mu[j] <= 1e-15 {
                    mu[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    mu
}

/// Projects `g` onto `{d | N d <= 0}` for the given rows of `N`.
fn project_tangent(g: &[f64], rows: &[&[f64]]) -> Vec<f64> {
    if rows.is_empty() {
        return g.to_vec();
    }
    let dim = g.len();
    let a = DMatrix::from_fn(dim, rows.len(), |r, c| rows[c][r]);
    let b = DVector::from_column_slice(g);
    let mu = nnls(&a, &b);
    let d = b - a * mu;
    d.iter().copied().collect()
}

/// Least-distance programming: the shortest `x` with `M x <= r`, or `None`
/// when the rows are inconsistent.
pub(crate) fn least_distance(rows: &[Vec<f64>], r: &[f64], dim: usize) -> Option<Vec<f64>> {
    if rows.is_empty() || r.iter().all(|&x| x >= 0.0) {
        return Some(vec![0.0; dim]);
    }
    // min ‖x‖ s.t. G x >= h with G = -M, h = -r, through NNLS on [Gᵀ; hᵀ].
    let q = rows.len();
    let e = DMatrix::from_fn(dim + 1, q, |i, j| if i < dim { -rows[j][i] } else { -r[j] });
    let mut f = DVector::zeros(dim + 1);
    f[dim] = 1.0;
    let u = nnls(&e, &f);
    let res = e * u - f;
    if res.norm() < 1e-12 || res[dim].abs() < 1e-300 {
        return None;
    }
    let x: Vec<f64> = (0..dim).map(|i| -res[i] / res[dim]).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Every row of Θ holds in exact arithmetic.
fn exactly_feasible(psm: &ParametricScalarMap, theta: &[f64]) -> bool {
    psm.theta_space().contains_exactly(theta)
}

/// Residual violation tolerated when no float point meets every row, as
/// with equality pairs whose solution is not representable.
const EPS_RESIDUAL: f64 = 1e-12;

/// A point of Θ certified for reporting a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Certified {
    pub theta: Vec<f64>,
    /// Every row holds in exact arithmetic.
    pub exact: bool,
}

/// Nearby point of Θ with every slack non-negative, shrinking the safety
/// margin until one is found. Falls back to the plain projection, or its
/// snapped neighbour, when it violates rows only at rounding level.
pub fn repair(psm: &ParametricScalarMap, theta: &[f64]) -> Option<Certified> {
    if exactly_feasible(psm, theta) {
        return Some(Certified { theta: theta.to_vec(), exact: true });
    }
    let space = psm.theta_space();
    if space.is_flagged_infeasible() {
        return None;
    }
    let slacks = space.slacks(theta);
    let scale = 1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut fallback = None;
    for margin in [1e-12, 1e-10, 1e-8, 0.0] {
        let r: Vec<f64> = space
            .m()
            .iter()
            .zip(&slacks)
            .zip(space.h())
            .map(|((row, &s), h)| s - margin * h.abs().max(norm(row) * scale).max(1.0))
            .collect();
        if let Some(dx) = least_distance(space.m(), &r, theta.len()) {
            let cand: Vec<f64> = theta.iter().zip(&dx).map(|(a, b)| a + b).collect();
            if exactly_feasible(psm, &cand) {
                return Some(Certified { theta: cand, exact: true });
            }
            if margin == 0.0 {
                fallback = Some(cand);
            }
        }
    }
    let cand = fallback?;
    let snapped: Vec<f64> = cand.iter().map(|&x| snap(x)).collect();
    if exactly_feasible(psm, &snapped) {
        return Some(Certified { theta: snapped, exact: true });
    }
    let size = 1.0 + cand.iter().chain(space.h()).fold(0.0f64, |m, x| m.max(x.abs()));
    let ok = space.m().iter().zip(space.slacks(&cand)).all(|(row, s)| s >= -EPS_RESIDUAL * size * norm(row).max(1.0));
    ok.then_some(Certified { theta: cand, exact: false })
}

/// Rounds to a multiple of 2^-24 when that moves `x` by rounding noise only.
fn snap(x: f64) -> f64 {
    const GRID: f64 = 16_777_216.0;
    let y = (x * GRID).round() / GRID;
    if (y - x).abs() <= 1e-9 * x.abs().max(1.0) {
        y
    } else {
        x
    }
}

/// A certified point for `theta`, preferring its snapped neighbour when that
/// lies in Θ exactly and certifies at least as high a bound.
fn polished(psm: &ParametricScalarMap, theta: &[f64]) -> Option<(Certified, crate::psm::Evaluation)> {
    let c = repair(psm, theta)?;
    let e = certified_evaluation(psm, &c);
    let snapped: Vec<f64> = c.theta.iter().map(|&x| snap(x)).collect();
    if snapped != c.theta && exactly_feasible(psm, &snapped) {
        let sc = Certified { theta: snapped, exact: true };
        let se = certified_evaluation(psm, &sc);
        if se.value.is_finite() && se.sound_value() >= e.sound_value() {
            return Some((sc, se));
        }
    }
    Some((c, e))
}

/// Evaluation at a certified point; rounding-level residuals count as
/// inexact so the reported bound is relaxed.
pub fn certified_evaluation(psm: &ParametricScalarMap, c: &Certified) -> crate::psm::Evaluation {
    let mut e = psm.evaluate_unchecked(&c.theta);
    e.exact &= c.exact;
    e
}

struct Searcher<'a> {
    psm: &'a ParametricScalarMap,
    objective: &'a Objective,
    config: &'a AggConfig,
}

enum Step {
    Move(Vec<f64>),
    Stationary,
}

impl Searcher<'_> {
    fn ascent_step(&self, theta: &[f64], grad: &[f64], l: f64) -> Step {
        let js = self.objective.d_score(l);
        let g: Vec<f64> = grad.iter().map(|x| js * x).collect();
        let gn = norm(&g);
        if gn == 0.0 || !gn.is_finite() {
            return Step::Stationary;
        }
        if self.config.step_rule == StepRule::Literal {
            return Step::Move(theta.iter().zip(&g).map(|(t, g)| t + self.config.eta * g).collect());
        }
        let space = self.psm.theta_space();
        let slacks = space.slacks(theta);
        let active: Vec<&[f64]> = space
            .m()
            .iter()
            .zip(&slacks)
            .filter(|(row, &s)| s <= EPS_FEAS * norm(row).max(1.0))
            .map(|(row, _)| row.as_slice())
            .collect();
        let d = project_tangent(&g, &active);
        let dn = norm(&d);
        let scale = 1.0 + norm(theta);
        if dn <= 1e-12 * gn || dn * self.config.eta <= 1e-15 * scale {
            return Step::Stationary;
        }
        let mut t = self.config.eta;
        for (row, &s) in space.m().iter().zip(&slacks) {
            let rate: f64 = row.iter().zip(&d).map(|(a, b)| a * b).sum();
            if rate > 1e-12 * norm(row) * dn {
                t = t.min(s.max(0.0) / rate);
            }
        }
        let t_min = 1e-12 * scale / dn;
        t = t.min(self.psm.first_kink(theta, &d, t_min));
        if t <= t_min {
            return Step::Stationary;
        }
        Step::Move(theta.iter().zip(&d).map(|(x, dx)| x + t * dx).collect())
    }

    fn restore_step(&self, theta: &[f64]) -> Step {
        let cap = self.config.eta * self.config.beta;
        if self.config.step_rule == StepRule::Guarded {
            let Some(Certified { theta: target, .. }) = repair(self.psm, theta) else { return Step::Stationary };
            let dx: Vec<f64> = target.iter().zip(theta).map(|(a, b)| a - b).collect();
            let len = norm(&dx);
            if len <= cap {
                return Step::Move(target);
            }
            return Step::Move(theta.iter().zip(&dx).map(|(t, d)| t + cap / len * d).collect());
        }
        let f = self.psm.feasibility(theta, self.config.p);
        if !f.violation.is_finite() || f.penalty_grad.iter().all(|&g| g == 0.0) {
            return Step::Stationary;
        }
        Step::Move(theta.iter().zip(&f.penalty_grad).map(|(t, g)| t - cap * g).collect())
    }

    fn run(&self) -> AggResult {
        let dim = self.psm.dim();
        let mut theta = vec![0.0; dim];
        let mut trace = Vec::with_capacity(self.config.epochs + 1);
        let mut best: Option<(f64, f64, bool, Vec<f64>)> = None;
        let mut epochs_run = 0;
        let empty = self.psm.theta_space().is_flagged_infeasible();
        for epoch in 0..=self.config.epochs {
            let eval = if empty { None } else { self.psm.theta_space().contains(&theta).then(|| self.psm.evaluate_unchecked(&theta)) };
            let (bound, score) = match &eval {
                Some(e) => (ExtScalar::Finite(e.value), Some(self.objective.score(e.value))),
                None => (ExtScalar::NegInf, None),
            };
            if let Some(s) = score {
                if best.as_ref().map_or(true, |(bs, ..)| s > *bs) {
                    // the reported bound comes from a point satisfying Θ exactly
                    if let Some((c, e)) = polished(self.psm, &theta) {
                        let s = self.objective.score(e.value);
                        let sound = outward_round(e.value, e.exact);
                        // a gain smaller than the rounding relaxation would lower the reported bound
                        let keeps_sound = best.as_ref().map_or(true, |(_, v, x, _)| sound >= outward_round(*v, *x));
                        if best.as_ref().map_or(true, |(bs, ..)| s > *bs) && keeps_sound {
                            best = Some((s, e.value, e.exact, c.theta));
                        }
                    }
                }
            }
            let best_bound = best.as_ref().map_or(ExtScalar::NegInf, |b| ExtScalar::Finite(b.1));
            trace.push(EpochRecord { epoch, theta: theta.clone(), feasible: eval.is_some(), bound, score, best_bound });
            if epoch == self.config.epochs || empty {
                break;
            }
            let step = match &eval {
                Some(e) => self.ascent_step(&theta, &e.grad, e.value),
                None => self.restore_step(&theta),
            };
            match step {
                Step::Move(next) if next.iter().all(|x| x.is_finite()) && next != theta => theta = next,
                _ => break,
            }
            epochs_run = epoch + 1;
        }
        match best {
            Some((_, value, exact, th)) => AggResult {
                theta_best: ParamVector(th),
                bound_best: ExtScalar::Finite(value),
                sound_bound: ExtScalar::Finite(outward_round(value, exact)),
                trace,
                epochs_run,
            },
            None => AggResult {
                theta_best: ParamVector(vec![0.0; dim]),
                bound_best: ExtScalar::NegInf,
                sound_bound: ExtScalar::NegInf,
                trace,
                epochs_run,
            },
        }
    }
}

/// Searches one parametric scalar map.
pub fn agg_search(psm: &ParametricScalarMap, objective: &Objective, config: &AggConfig) -> AggResult {
    Searcher { psm, objective, config }.run()
}

/// Searches every map independently; results follow input order.
pub fn joint_search(psms: &[ParametricScalarMap], objective: &Objective, config: &AggConfig) -> Vec<AggResult> {
    joint_search_with(Exec::Auto, psms, objective, config)
}

pub fn joint_search_with(
    exec: Exec,
    psms: &[ParametricScalarMap],
    objective: &Objective,
    config: &AggConfig,
) -> Vec<AggResult> {
    par::map_with(exec, psms, |p| agg_search(p, objective, config))
}
