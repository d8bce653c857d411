//! Randomized soundness audit of a parametric scalar map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::agg::{agg_search, certified_evaluation, repair, AggConfig, Certified, Objective};
use crate::domain::ConstraintSystem;
use crate::error::Result;
use crate::ext::ExtScalar;
use crate::par;
use crate::poly::QuadPoly;
use crate::psm::ParametricScalarMap;

use super::sampling::{sample_min, SampleMin};
use super::simplex::{lp_min_system, to_rational, LpOutcome, LpSummary};

/// Slack allowed against the sampled minimum.
pub const EPS_AUDIT: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// The sampled minimum `value` at `point` lies below `L`.
    Sample { value: f64, point: Vec<f64> },
    /// The exact LP optimum lies below `L`.
    Lp { value: String },
    /// `L` is finite but the LP is unbounded below.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub theta: Vec<f64>,
    pub bound: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub thetas_checked: usize,
    pub max_bound: ExtScalar,
    pub sampled: Option<SampleMin>,
    pub lp: Option<LpSummary>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// θ samples: the origin, the search optimum, and random draws projected
/// onto Θ.
fn sample_thetas(psm: &ParametricScalarMap, n_theta: usize, rng: &mut ChaCha8Rng) -> Vec<Certified> {
    let dim = psm.dim();
    let mut out = Vec::with_capacity(n_theta + 2);
    if psm.theta_space().is_flagged_infeasible() {
        return out;
    }
    let zero = vec![0.0; dim];
    if psm.theta_space().contains(&zero) {
        out.extend(repair(psm, &zero));
    }
    let best = agg_search(psm, &Objective::Precision, &AggConfig::default().with_epochs(100));
    if best.bound_best.is_finite() {
        out.extend(repair(psm, &best.theta_best.0));
    }
    let scale = 1.0 + best.theta_best.0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lambdas = psm.layout().n_lambda;
    let mut attempts = 0;
    while out.len() < n_theta && attempts < 20 * n_theta.max(1) {
        attempts += 1;
        let draw: Vec<f64> = (0..dim)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                let base = if rng.gen_bool(0.5) { best.theta_best.0[j] } else { 0.0 };
                let v = base + z * scale * rng.gen_range(0.01..1.0);
                if j < lambdas { v.abs() } else { v }
            })
            .collect();
        out.extend(repair(psm, &draw));
    }
    out
}

/// Checks `L(θ) <= min f` over sampled θ ∈ Θ against a sampled minimum and,
/// for linear `f`, the exact LP optimum.
pub fn soundness_audit(
    psm: &ParametricScalarMap,
    f: &QuadPoly,
    sys: &ConstraintSystem,
    n_theta: usize,
    n_points: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas = sample_thetas(psm, n_theta, &mut rng);
    let sampled = match sample_min(f, sys, n_points, seed ^ 0x5eed) {
        Ok(s) => Some(s),
        Err(crate::error::Error::NoFeasibleSeed(_)) | Err(crate::error::Error::Infeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    let lp = if f.is_linear() { Some(lp_min_system(f.linear_coeffs(), f.constant_term(), sys)?) } else { None };

    let checks = par::map(&thetas, |c| -> Result<(f64, Vec<Violation>)> {
        let theta = &c.theta;
        let e = certified_evaluation(psm, c);
        let mut found = Vec::new();
        if let Some(s) = &sampled {
            if e.value > s.value + EPS_AUDIT * s.value.abs().max(1.0) {
                found.push(Violation {
                    theta: theta.clone(),
                    bound: e.value,
                    witness: Witness::Sample { value: s.value, point: s.point.clone() },
                });
            }
        }
        match &lp {
            Some(LpOutcome::Optimal { value, .. }) => {
                let claimed = if e.exact { e.value } else { e.sound_value().next_up() };
                if to_rational(claimed)? > *value {
                    found.push(Violation {
                        theta: theta.clone(),
                        bound: e.value,
                        witness: Witness::Lp { value: value.to_string() },
                    });
                }
            }
            Some(LpOutcome::Unbounded) => {
                found.push(Violation { theta: theta.clone(), bound: e.value, witness: Witness::Unbounded });
            }
            _ => {}
        }
        Ok((e.value, found))
    });
    let mut max_bound = ExtScalar::NegInf;
    let mut violations = Vec::new();
    for c in checks {
        let (v, found) = c?;
        max_bound = max_bound.max(ExtScalar::new(v)?);
        violations.extend(found);
    }
    Ok(AuditReport {
        thetas_checked: thetas.len(),
        max_bound,
        sampled,
        lp: lp.as_ref().map(LpSummary::from),
        violations,
    })
}
