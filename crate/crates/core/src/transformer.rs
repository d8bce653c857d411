//! Synthesized abstract transformers for quadratic-bounded guarded operators.

use std::sync::Arc;

use serde::Serialize;

use crate::agg::{joint_search_with, AggConfig, AggResult, Objective};
use crate::domain::{element_to_constraints, extract_box, AbstractElement, ConstraintSystem, Template};
use crate::error::{Error, Result};
use crate::eum::{EffectiveUpdateMap, GuardSystem};
use crate::ext::ExtScalar;
use crate::par::{self, Exec};
use crate::poly::effective_objective;
use crate::psm::{build_psm, ParametricScalarMap};

/// An update map optionally preceded by a conjunction of linear guards.
#[derive(Debug, Clone, PartialEq)]
pub struct QgoOperator {
    sigma: EffectiveUpdateMap,
    guard: Option<GuardSystem>,
}

impl QgoOperator {
    pub fn new(sigma: EffectiveUpdateMap, guard: Option<GuardSystem>) -> Result<Self> {
        if !sigma.is_quadratic_bounded() {
            return Err(Error::Config("update map is not quadratic-bounded".into()));
        }
        if let Some(g) = &guard {
            if g.0.n_vars() != sigma.n_vars() {
                return Err(Error::DimensionMismatch { expected: sigma.n_vars(), found: g.0.n_vars() });
            }
        }
        Ok(QgoOperator { sigma, guard })
    }

    /// A pure guard.
    pub fn assume(guard: ConstraintSystem) -> Self {
        let n = guard.n_vars();
        QgoOperator { sigma: EffectiveUpdateMap::identity(n), guard: Some(GuardSystem(guard)) }
    }

    pub fn identity(n: usize) -> Self {
        QgoOperator { sigma: EffectiveUpdateMap::identity(n), guard: None }
    }

    pub fn sigma(&self) -> &EffectiveUpdateMap {
        &self.sigma
    }

    pub fn guard(&self) -> Option<&GuardSystem> {
        self.guard.as_ref()
    }
}

/// Per-row parametric maps; `None` marks a row with no finite bound, either
/// because its parameter space is empty or because the input is bottom.
#[derive(Debug, Clone)]
pub struct TransformerFamily {
    template: Arc<Template>,
    row_psms: Vec<Option<ParametricScalarMap>>,
    bottom: bool,
}

impl TransformerFamily {
    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    pub fn row_psms(&self) -> &[Option<ParametricScalarMap>] {
        &self.row_psms
    }

    pub fn row(&self, i: usize) -> Option<&ParametricScalarMap> {
        self.row_psms[i].as_ref()
    }

    /// True when the stacked input region was found empty by box extraction.
    pub fn is_bottom(&self) -> bool {
        self.bottom
    }
}

pub fn synthesize_family(
    template: &Arc<Template>,
    op: &QgoOperator,
    input: &AbstractElement,
) -> Result<TransformerFamily> {
    synthesize_family_with(Exec::Auto, template, op, input)
}

pub fn synthesize_family_with(
    exec: Exec,
    template: &Arc<Template>,
    op: &QgoOperator,
    input: &AbstractElement,
) -> Result<TransformerFamily> {
    let n = template.n_vars();
    if input.template().n_vars() != n {
        return Err(Error::DimensionMismatch { expected: n, found: input.template().n_vars() });
    }
    if op.sigma.n_vars() != n {
        return Err(Error::DimensionMismatch { expected: n, found: op.sigma.n_vars() });
    }
    let mut sys = element_to_constraints(input);
    if let Some(g) = &op.guard {
        sys = sys.stack(&g.0)?;
    }
    if let Err(e) = extract_box(&sys) {
        return match e {
            Error::Infeasible { .. } => {
                Ok(TransformerFamily { template: template.clone(), row_psms: vec![None; template.n_rows()], bottom: true })
            }
            e => Err(e),
        };
    }
    let built = par::map_range(exec, template.n_rows(), |i| -> Result<Option<ParametricScalarMap>> {
        let f = effective_objective(template.row(i), &op.sigma)?;
        let p = build_psm(&f, &sys)?;
        Ok((!p.theta_space().is_flagged_infeasible()).then_some(p))
    });
    let row_psms = built.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TransformerFamily { template: template.clone(), row_psms, bottom: false })
}

/// Output element together with the per-row search results.
#[derive(Debug, Clone, Serialize)]
pub struct Application {
    #[serde(skip)]
    pub element: AbstractElement,
    pub rows: Vec<Option<AggResult>>,
}

pub fn apply(family: &TransformerFamily, objective: &Objective, config: &AggConfig) -> AbstractElement {
    apply_detailed(Exec::Auto, family, objective, config).element
}

pub fn apply_detailed(
    exec: Exec,
    family: &TransformerFamily,
    objective: &Objective,
    config: &AggConfig,
) -> Application {
    let idx: Vec<usize> = (0..family.row_psms.len()).filter(|&i| family.row_psms[i].is_some()).collect();
    let psms: Vec<ParametricScalarMap> = idx.iter().map(|&i| family.row_psms[i].clone().unwrap()).collect();
    let results = joint_search_with(exec, &psms, objective, config);
    let mut rows: Vec<Option<AggResult>> = vec![None; family.row_psms.len()];
    for (i, r) in idx.into_iter().zip(results) {
        rows[i] = Some(r);
    }
    let bounds = rows.iter().map(|r| r.as_ref().map_or(ExtScalar::NegInf, |r| r.sound_bound)).collect();
    let element = AbstractElement::new(family.template.clone(), bounds).expect("search bounds are never +inf");
    Application { element, rows }
}

/// The θ = 0 output.
pub fn interval_relaxation_output(family: &TransformerFamily) -> AbstractElement {
    apply(family, &Objective::Precision, &AggConfig::default().with_epochs(0))
}
