//! Worklist fixpoint over the merged control-flow graph.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::agg::{AggConfig, Objective};
use crate::domain::{
    element_to_constraints, format_linear, make_template, AbstractElement, ConstraintSystem, Template,
    TemplateKind,
};
use crate::error::{Error, Result};
use crate::eum::{merge_blocks, EffectiveUpdateMap, MergePolicy, MergedProgram, Stmt};
use crate::ext::ExtScalar;
use crate::ir::{rpo_and_heads, BlockId, Program, Terminator};
use crate::par::Exec;
use crate::poly::QuadPoly;
use crate::psm::build_psm;
use crate::syntax::{LinearCondition, Relation};
use crate::transformer::{apply_detailed, synthesize_family_with, QgoOperator};

use super::point_label;

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub template_kind: TemplateKind,
    pub merge_policy: MergePolicy,
    pub agg: AggConfig,
    pub objective: Objective,
    /// Joins at a loop head before widening engages.
    pub widening_delay: usize,
    /// One descending pass after the widened fixpoint.
    pub narrowing: bool,
    /// Exact LP emptiness check after every guard.
    pub bottom_probe: bool,
    /// Block visits allowed before giving up.
    pub max_visits: usize,
    pub exec: Exec,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            template_kind: TemplateKind::Octagon,
            merge_policy: MergePolicy::MergeAll,
            agg: AggConfig::default(),
            objective: Objective::Precision,
            widening_delay: 2,
            narrowing: true,
            bottom_probe: false,
            max_visits: 10_000,
            exec: Exec::Auto,
        }
    }
}

/// One abstract state per block entry plus the program exit. `None` marks
/// an unreachable point.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMap {
    template: Arc<Template>,
    labels: Vec<String>,
    states: Vec<Option<AbstractElement>>,
}

impl InvariantMap {
    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, label: &str) -> Option<Option<&AbstractElement>> {
        self.labels.iter().position(|l| l == label).map(|i| self.states[i].as_ref())
    }

    pub fn block(&self, b: BlockId) -> Option<&AbstractElement> {
        self.states[b].as_ref()
    }

    pub fn exit(&self) -> Option<&AbstractElement> {
        self.states.last().and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<&AbstractElement>)> {
        self.labels.iter().map(String::as_str).zip(self.states.iter().map(Option::as_ref))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let points: Vec<serde_json::Value> = self
            .iter()
            .map(|(id, st)| match st {
                Some(e) => json!({
                    "id": id,
                    "reachable": true,
                    "constraints": e.constraint_strings(),
                    "bounds": e.bounds(),
                }),
                None => json!({ "id": id, "reachable": false, "constraints": [], "bounds": [] }),
            })
            .collect();
        json!({
            "template": self.template.kind(),
            "vars": self.template.var_names(),
            "rows": (0..self.template.n_rows()).map(|i| self.template.row_expr(i)).collect::<Vec<_>>(),
            "points": points,
        })
    }

    /// Reads back the output of [`InvariantMap::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Result<InvariantMap> {
        let bad = |m: &str| Error::MalformedMap(m.to_string());
        let strings = |key: &str| -> Result<Vec<String>> {
            v.get(key)
                .and_then(|x| x.as_array())
                .ok_or_else(|| bad(&format!("missing `{key}`")))?
                .iter()
                .map(|s| s.as_str().map(str::to_string).ok_or_else(|| bad(&format!("`{key}` holds a non-string"))))
                .collect()
        };
        let vars = strings("vars")?;
        let rows = strings("rows")?;
        let kind: TemplateKind = v
            .get("template")
            .and_then(|x| x.as_str())
            .ok_or_else(|| bad("missing `template`"))?
            .parse()?;
        let coeffs = rows
            .iter()
            .map(|r| {
                let p = crate::poly::parse_quad(r, &vars)?;
                if p.is_linear() {
                    Ok(p.linear_coeffs().to_vec())
                } else {
                    Err(bad(&format!("row `{r}` is not linear")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let template = match kind {
            TemplateKind::Custom => Template::custom(coeffs.clone(), &vars)?,
            k => make_template(k, &vars)?,
        };
        if template.rows() != coeffs.as_slice() {
            return Err(bad("rows do not match the template"));
        }
        let template = Arc::new(template);
        let points = v.get("points").and_then(|x| x.as_array()).ok_or_else(|| bad("missing `points`"))?;
        let mut labels = Vec::with_capacity(points.len());
        let mut states = Vec::with_capacity(points.len());
        for p in points {
            let id = p.get("id").and_then(|x| x.as_str()).ok_or_else(|| bad("point without `id`"))?;
            labels.push(id.to_string());
            let reachable = p.get("reachable").and_then(|x| x.as_bool()).ok_or_else(|| bad("point without `reachable`"))?;
            states.push(if reachable {
                let bounds: Vec<ExtScalar> = serde_json::from_value(p.get("bounds").cloned().unwrap_or_default())
                    .map_err(|e| bad(&format!("bounds of {id}: {e}")))?;
                Some(AbstractElement::new(template.clone(), bounds)?)
            } else {
                None
            });
        }
        Ok(InvariantMap { template, labels, states })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub point: String,
    pub condition: String,
    pub reachable: bool,
    pub proven: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AnalysisStats {
    pub block_visits: usize,
    pub widened_rows: usize,
    pub transformer_calls: usize,
    pub merged_blocks: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub invariants: InvariantMap,
    pub loop_heads: Vec<BlockId>,
    pub assertions: Vec<AssertionOutcome>,
    pub stats: AnalysisStats,
}

/// Renders `a·v + k REL 0` as `a·v REL -k`.
pub fn render_condition<S: AsRef<str>>(c: &LinearCondition, names: &[S]) -> String {
    let rel = match c.rel {
        Relation::Le => "<=",
        Relation::Lt => "<",
        Relation::Ge => ">=",
        Relation::Gt => ">",
        Relation::Eq => "==",
    };
    let rhs = -c.constant + 0.0;
    format!("{} {rel} {rhs}", format_linear(&c.coeffs, names))
}

fn meet_opt(a: &Option<AbstractElement>, b: &Option<AbstractElement>) -> Result<Option<AbstractElement>> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some(a.meet(b)?)),
        _ => Ok(None),
    }
}

fn join_opt(a: Option<AbstractElement>, b: Option<AbstractElement>) -> Result<Option<AbstractElement>> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some(a.join(&b)?)),
        (a, None) => Ok(a),
        (None, b) => Ok(b),
    }
}

fn tol(x: f64) -> f64 {
    1e-7 * x.abs().max(1.0)
}

/// Every row of `new` at or above the row of `old`.
fn stable(old: &AbstractElement, new: &AbstractElement) -> bool {
    old.bounds().iter().zip(new.bounds()).all(|(&o, &n)| match (o.finite(), n.finite()) {
        (None, _) => o == ExtScalar::NegInf || n == o,
        (Some(o), Some(n)) => n >= o,
        (Some(_), None) => false,
    })
}

struct Engine<'a> {
    prog: &'a MergedProgram,
    template: Arc<Template>,
    cfg: &'a AnalysisConfig,
    calls: Cell<usize>,
}

type Edge = (Option<BlockId>, Option<AbstractElement>);

impl Engine<'_> {
    fn n(&self) -> usize {
        self.prog.n_vars()
    }

    fn run_op(&self, op: &QgoOperator, input: &AbstractElement, agg: &AggConfig) -> Result<Option<AbstractElement>> {
        self.calls.set(self.calls.get() + 1);
        let fam = synthesize_family_with(self.cfg.exec, &self.template, op, input)?;
        if fam.is_bottom() {
            return Ok(None);
        }
        if self.cfg.bottom_probe {
            if let Some(g) = op.guard() {
                let sys = element_to_constraints(input).stack(&g.0)?;
                if !crate::oracle::is_feasible(&sys) {
                    return Ok(None);
                }
            }
        }
        Ok(Some(apply_detailed(self.cfg.exec, &fam, &self.cfg.objective, agg).element))
    }

    fn guard(&self, state: Option<AbstractElement>, conds: &[LinearCondition]) -> Result<Option<AbstractElement>> {
        let Some(s) = state else { return Ok(None) };
        let mut sys = ConstraintSystem::new(self.n());
        for c in conds {
            for (row, rhs) in c.rows() {
                sys.push(row, rhs)?;
            }
        }
        self.run_op(&QgoOperator::assume(sys), &s, &self.cfg.agg)
    }

    fn check_assert(&self, state: &Option<AbstractElement>, conds: &[LinearCondition]) -> Result<bool> {
        let Some(s) = state else { return Ok(true) };
        let sys = element_to_constraints(s);
        for c in conds {
            let strict = matches!(c.rel, Relation::Lt | Relation::Gt);
            for (row, rhs) in c.rows() {
                let f = QuadPoly::linear(row.iter().map(|a| -a).collect(), 0.0);
                let psm = match build_psm(&f, &sys) {
                    Ok(p) => p,
                    Err(Error::Infeasible { .. }) => return Ok(true),
                    Err(e) => return Err(e),
                };
                let r = crate::agg::agg_search(&psm, &Objective::Precision, &self.cfg.agg);
                let Some(l) = r.sound_bound.finite() else { return Ok(false) };
                let max = -l;
                let ok = if strict { max < rhs } else { max <= rhs };
                if !ok {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn transfer(
        &self,
        b: BlockId,
        input: Option<AbstractElement>,
        mut asserts: Option<&mut Vec<AssertionOutcome>>,
    ) -> Result<Option<AbstractElement>> {
        let mut state = input;
        let n = self.n();
        for stmt in &self.prog.blocks[b].stmts {
            state = match stmt {
                Stmt::Merged(blk) => match &state {
                    Some(s) => self.run_op(&QgoOperator::new(blk.sigma().clone(), None)?, s, &self.cfg.agg)?,
                    None => None,
                },
                Stmt::Single(a) => match &state {
                    Some(s) => {
                        let sigma = EffectiveUpdateMap::from_updates(n, [(a.target, a.rhs.clone())]);
                        self.run_op(&QgoOperator::new(sigma, None)?, s, &self.cfg.agg.with_epochs(0))?
                    }
                    None => None,
                },
                Stmt::Assume(conds) => self.guard(state, conds)?,
                Stmt::Havoc(v) => state.map(|s| s.forget(*v)),
                Stmt::Assert(conds) => {
                    if let Some(out) = asserts.as_deref_mut() {
                        let proven = self.check_assert(&state, conds)?;
                        for c in conds {
                            out.push(AssertionOutcome {
                                point: point_label(b),
                                condition: render_condition(c, &self.prog.vars),
                                reachable: state.is_some(),
                                proven,
                            });
                        }
                    }
                    state
                }
            };
        }
        Ok(state)
    }

    fn edges(&self, b: BlockId, out: Option<AbstractElement>) -> Result<Vec<Edge>> {
        Ok(match &self.prog.blocks[b].term {
            Terminator::Goto(s) => vec![(Some(*s), out)],
            Terminator::Exit => vec![(None, out)],
            Terminator::Branch { cond, then_to, else_to } => {
                let t = self.guard(out.clone(), std::slice::from_ref(cond))?;
                let e = match cond.negated() {
                    Some(neg) => self.guard(out, &[neg])?,
                    None => out,
                };
                vec![(Some(*then_to), t), (Some(*else_to), e)]
            }
        })
    }
}

pub fn analyze(program: &Program, config: &AnalysisConfig) -> Result<Analysis> {
    config.agg.validate()?;
    if config.template_kind == TemplateKind::Custom {
        return Err(Error::Config("the analyzer needs a built-in template kind".into()));
    }
    let template = Arc::new(make_template(config.template_kind, &program.vars)?);
    analyze_with_template(program, template, config)
}

pub fn analyze_with_template(program: &Program, template: Arc<Template>, config: &AnalysisConfig) -> Result<Analysis> {
    if template.n_vars() != program.n_vars() {
        return Err(Error::DimensionMismatch { expected: program.n_vars(), found: template.n_vars() });
    }
    let (merged, blocks) = merge_blocks(program, config.merge_policy);
    let engine = Engine { prog: &merged, template: template.clone(), cfg: config, calls: Cell::new(0) };
    let nb = merged.blocks.len();
    let succs: Vec<Vec<BlockId>> = merged.blocks.iter().map(|b| b.term.successors()).collect();
    let (rpo, heads) = rpo_and_heads(&succs, merged.entry);
    let mut pos = vec![usize::MAX; nb];
    for (i, &b) in rpo.iter().enumerate() {
        pos[b] = i;
    }

    let mut states: Vec<Option<AbstractElement>> = vec![None; nb];
    states[merged.entry] = Some(AbstractElement::top(template.clone()));
    let mut exit: Option<AbstractElement> = None;
    let mut joins = vec![0usize; nb];
    let mut stats = AnalysisStats { merged_blocks: blocks.len(), ..AnalysisStats::default() };
    let mut work: BTreeSet<usize> = BTreeSet::from([pos[merged.entry]]);

    while let Some(p) = work.pop_first() {
        let b = rpo[p];
        stats.block_visits += 1;
        if stats.block_visits > config.max_visits {
            return Err(Error::Diverged(stats.block_visits));
        }
        let out = engine.transfer(b, states[b].clone(), None)?;
        for (succ, incoming) in engine.edges(b, out)? {
            let Some(inc) = incoming else { continue };
            let Some(s) = succ else {
                exit = join_opt(exit, Some(inc))?;
                continue;
            };
            let old = states[s].clone();
            let mut new = match &old {
                Some(o) => o.join(&inc)?,
                None => inc,
            };
            if let Some(o) = &old {
                if stable(o, &new) {
                    continue;
                }
                if heads[s] {
                    joins[s] += 1;
                    if joins[s] > config.widening_delay {
                        let bounds = o
                            .bounds()
                            .iter()
                            .zip(new.bounds())
                            .map(|(&ob, &nb)| match (ob.finite(), nb.finite()) {
                                (Some(x), Some(y)) if y >= x - tol(x) => nb,
                                (None, _) => nb,
                                _ => {
                                    stats.widened_rows += 1;
                                    ExtScalar::NegInf
                                }
                            })
                            .collect();
                        new = AbstractElement::new(template.clone(), bounds)?;
                    }
                }
            }
            states[s] = Some(new);
            work.insert(pos[s]);
        }
    }

    if config.narrowing {
        let preds = {
            let mut p = vec![Vec::new(); nb];
            for (b, ss) in succs.iter().enumerate() {
                for &s in ss {
                    if !p[s].contains(&b) {
                        p[s].push(b);
                    }
                }
            }
            p
        };
        let mut fresh: Vec<Option<Vec<Edge>>> = vec![None; nb];
        let mut stale: Vec<Option<Vec<Edge>>> = vec![None; nb];
        let mut narrowed = states.clone();
        for &b in &rpo {
            if b != merged.entry {
                let mut acc: Option<AbstractElement> = None;
                for &p in &preds[b] {
                    if pos[p] == usize::MAX {
                        continue;
                    }
                    let done = pos[p] < pos[b];
                    let slot = if done { &mut fresh[p] } else { &mut stale[p] };
                    if slot.is_none() {
                        let src = if done { narrowed[p].clone() } else { states[p].clone() };
                        let out = engine.transfer(p, src, None)?;
                        *slot = Some(engine.edges(p, out)?);
                        stats.block_visits += 1;
                    }
                    for (s, st) in slot.as_ref().unwrap() {
                        if *s == Some(b) {
                            acc = join_opt(acc, st.clone())?;
                        }
                    }
                }
                narrowed[b] = meet_opt(&states[b], &acc)?;
            }
            if fresh[b].is_none() {
                let out = engine.transfer(b, narrowed[b].clone(), None)?;
                fresh[b] = Some(engine.edges(b, out)?);
                stats.block_visits += 1;
            }
        }
        let mut new_exit = None;
        for &b in &rpo {
            for (s, st) in fresh[b].as_ref().unwrap() {
                if s.is_none() {
                    new_exit = join_opt(new_exit, st.clone())?;
                }
            }
        }
        exit = meet_opt(&exit, &new_exit)?;
        states = narrowed;
    }

    let mut assertions = Vec::new();
    for &b in &rpo {
        engine.transfer(b, states[b].clone(), Some(&mut assertions))?;
    }
    stats.transformer_calls = engine.calls.get();

    let mut labels: Vec<String> = (0..nb).map(point_label).collect();
    labels.push("exit".into());
    states.push(exit);
    let loop_heads = (0..nb).filter(|&b| heads[b]).collect();
    Ok(Analysis { invariants: InvariantMap { template, labels, states }, loop_heads, assertions, stats })
}

/// Totals of [`compare_elements`](crate::domain::compare_elements) over all points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InvariantComparison {
    pub strengthened_invariants: usize,
    pub new_constraints: usize,
    pub tightened_constraints: usize,
}

/// An unreachable point in `new` strengthens any reachable one in `base`.
pub fn compare_invariants(base: &InvariantMap, new: &InvariantMap) -> Result<InvariantComparison> {
    if base.labels != new.labels {
        return Err(Error::IncomparableMaps("the maps cover different program points".into()));
    }
    if *base.template != *new.template {
        return Err(Error::IncomparableMaps("the maps use different templates".into()));
    }
    let mut out = InvariantComparison::default();
    for (b, n) in base.states.iter().zip(&new.states) {
        match (b, n) {
            (Some(b), Some(n)) => {
                let c = crate::domain::compare_elements(b, n)?;
                out.strengthened_invariants += c.strengthened as usize;
                out.new_constraints += c.new_constraint_count;
                out.tightened_constraints += c.tightened_count;
            }
            (Some(_), None) => out.strengthened_invariants += 1,
            _ => {}
        }
    }
    Ok(out)
}
