use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::Context;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use ustad_core::agg::{agg_search, AggResult, Objective};
use ustad_core::eum::{merge_blocks, Stmt};
use ustad_core::interp::{analyze as run_analysis, compare_invariants, parse_program, point_label, render_condition, InvariantMap};
use ustad_core::ir::{Assignment, Terminator};
use ustad_core::oracle::{lp_min_system, sample_min, soundness_audit, LpSummary};
use ustad_core::psm::{build_psm, ParametricScalarMap};
use ustad_core::syntax::{parse_problem, Problem};
use ustad_core::{compare_elements, Error, ExtScalar};

use crate::config::{usage, RunConfig};

pub const SCHEMA: u32 = 1;

struct Source {
    text: String,
    hash: String,
}

fn read_source(path: &Path) -> anyhow::Result<Source> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let hash = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok(Source { text, hash })
}

fn read_problem(path: &Path) -> anyhow::Result<(Problem, Source)> {
    let src = read_source(path)?;
    let problem = parse_problem(&src.text).with_context(|| path.display().to_string())?;
    Ok((problem, src))
}

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("cannot write to stdout")
        }
    }
}

fn emit_json(cfg: &RunConfig, doc: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write_out(cfg.output_path.as_deref(), &text)
}

pub fn analyze(path: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let src = read_source(path)?;
    let program = parse_program(&src.text).with_context(|| path.display().to_string())?;
    let acfg = cfg.analysis();
    let run = run_analysis(&program, &acfg).with_context(|| format!("analysis of {} failed", path.display()))?;
    let mut base_cfg = acfg.clone();
    base_cfg.agg.epochs = 0;
    let base = run_analysis(&program, &base_cfg).context("baseline analysis failed")?;
    let metrics = compare_invariants(&base.invariants, &run.invariants)?;
    let doc = json!({
        "schema": SCHEMA,
        "command": "analyze",
        "program": path.display().to_string(),
        "program_hash": src.hash,
        "timestamp": timestamp(),
        "config": cfg.analysis_json(),
        "invariants": run.invariants.to_json(),
        "loop_heads": run.loop_heads.iter().map(|&b| point_label(b)).collect::<Vec<_>>(),
        "assertions": run.assertions,
        "stats": run.stats,
        "baseline": { "epochs": 0, "stats": base.stats },
        "metrics": metrics,
    });
    emit_json(cfg, &doc)
}

pub struct BoundOptions {
    pub trace: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    pub oracle: bool,
    pub json: bool,
}

fn oracle_json(p: &Problem, cfg: &RunConfig) -> anyhow::Result<Value> {
    let f = &p.objective;
    let lp = if f.is_linear() {
        Some(LpSummary::from(&lp_min_system(f.linear_coeffs(), f.constant_term(), &p.constraints)?))
    } else {
        None
    };
    let sample = match sample_min(f, &p.constraints, cfg.points, cfg.seed) {
        Ok(s) => Some(s),
        Err(Error::NoFeasibleSeed(_)) | Err(Error::Infeasible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(json!({ "lp_min_exact": lp, "sample_min": sample, "points": cfg.points, "seed": cfg.seed }))
}

fn bound_text(p: &Problem, psm: &ParametricScalarMap, r: &AggResult, oracle: Option<&Value>) -> String {
    let layout = psm.layout();
    let l0 = psm.eval_l(&vec![0.0; psm.dim()]).unwrap_or(ExtScalar::NegInf);
    let mut s = String::new();
    let _ = writeln!(s, "objective    {}", p.objective.display_with(&p.vars));
    let _ = writeln!(s, "variables    {}", p.vars.join(", "));
    let _ = writeln!(s, "constraints  {}", p.constraints.len());
    let _ = writeln!(
        s,
        "parameters   {} ({} multipliers, {} square splits, {} bilinear splits)",
        psm.dim(),
        layout.n_lambda,
        layout.squares.len(),
        2 * layout.pairs.len()
    );
    let space = psm.theta_space();
    let _ = writeln!(s, "theta rows   {}{}", space.m().len(), if space.is_flagged_infeasible() { " (empty)" } else { "" });
    let _ = writeln!(s, "L(0)         {l0}");
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>5}  {:<8}  {:>24}  {:>24}", "epoch", "feasible", "bound", "best");
    for e in &r.trace {
        let _ = writeln!(
            s,
            "{:>5}  {:<8}  {:>24}  {:>24}",
            e.epoch,
            if e.feasible { "yes" } else { "no" },
            e.bound.to_string(),
            e.best_bound.to_string()
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "bound        {}", r.bound_best);
    let _ = writeln!(s, "sound bound  {}", r.sound_bound);
    let theta: Vec<String> = r.theta_best.0.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(s, "theta_best   [{}]", theta.join(", "));
    if let Some(o) = oracle {
        let lp = match o["lp_min_exact"]["status"].as_str() {
            Some("optimal") => format!("{} ({})", o["lp_min_exact"]["approx"], o["lp_min_exact"]["value"].as_str().unwrap_or("")),
            Some(other) => other.to_string(),
            None => "n/a (objective is not linear)".into(),
        };
        let _ = writeln!(s, "lp_min_exact {lp}");
        let sample = match o["sample_min"].get("value") {
            Some(v) => format!("{v} ({} points, seed {})", o["points"], o["seed"]),
            None => "no feasible sample".into(),
        };
        let _ = writeln!(s, "sample_min   {sample}");
    }
    s
}

pub fn bound(path: &Path, cfg: &RunConfig, opts: &BoundOptions) -> anyhow::Result<()> {
    let (problem, src) = read_problem(path)?;
    let psm = build_psm(&problem.objective, &problem.constraints).with_context(|| path.display().to_string())?;
    if let Some(d) = &opts.dump {
        let mut doc = psm.dump(&problem.vars);
        doc["schema"] = json!(SCHEMA);
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        fs::write(d, text).with_context(|| format!("cannot write {}", d.display()))?;
    }
    let result = agg_search(&psm, &Objective::Precision, &cfg.agg);
    if let Some(t) = &opts.trace {
        let mut text = String::new();
        for e in &result.trace {
            let mut line = serde_json::to_value(e)?;
            line["schema"] = json!(SCHEMA);
            text += &serde_json::to_string(&line)?;
            text.push('\n');
        }
        fs::write(t, text).with_context(|| format!("cannot write {}", t.display()))?;
    }
    let oracle = if opts.oracle { Some(oracle_json(&problem, cfg)?) } else { None };
    if opts.json {
        let doc = json!({
            "schema": SCHEMA,
            "command": "bound",
            "problem": path.display().to_string(),
            "problem_hash": src.hash,
            "timestamp": timestamp(),
            "config": cfg.agg_json(),
            "objective": problem.objective.display_with(&problem.vars),
            "parameters": psm.layout().labels(&problem.vars),
            "theta_space_empty": psm.theta_space().is_flagged_infeasible(),
            "bound_at_zero": psm.eval_l(&vec![0.0; psm.dim()]).unwrap_or(ExtScalar::NegInf),
            "trace": result.trace,
            "epochs_run": result.epochs_run,
            "bound": result.bound_best,
            "sound_bound": result.sound_bound,
            "theta_best": result.theta_best.0,
            "oracle": oracle,
        });
        emit_json(cfg, &doc)
    } else {
        write_out(cfg.output_path.as_deref(), &bound_text(&problem, &psm, &result, oracle.as_ref()))
    }
}

fn render_assignment(a: &Assignment, vars: &[String]) -> String {
    format!("{} := {}", vars[a.target], a.rhs.display_with(vars))
}

pub fn merge(path: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let src = read_source(path)?;
    let program = parse_program(&src.text).with_context(|| path.display().to_string())?;
    let (merged, list) = merge_blocks(&program, cfg.merge_policy);
    let vars = &merged.vars;
    let conds = |cs: &[ustad_core::syntax::LinearCondition]| -> Vec<String> {
        cs.iter().map(|c| render_condition(c, vars)).collect()
    };
    let blocks: Vec<Value> = merged
        .blocks
        .iter()
        .enumerate()
        .map(|(id, b)| {
            let stmts: Vec<Value> = b
                .stmts
                .iter()
                .map(|s| match s {
                    Stmt::Merged(blk) => json!({
                        "kind": "merged",
                        "assignments": blk.instrs().iter().map(|a| render_assignment(a, vars)).collect::<Vec<_>>(),
                        "update": blk
                            .sigma()
                            .updates()
                            .iter()
                            .map(|(&v, p)| (vars[v].clone(), Value::from(p.display_with(vars))))
                            .collect::<serde_json::Map<_, _>>(),
                    }),
                    Stmt::Single(a) => json!({ "kind": "single", "assignment": render_assignment(a, vars) }),
                    Stmt::Assume(c) => json!({ "kind": "assume", "conditions": conds(c) }),
                    Stmt::Assert(c) => json!({ "kind": "assert", "conditions": conds(c) }),
                    Stmt::Havoc(v) => json!({ "kind": "havoc", "var": vars[*v] }),
                })
                .collect();
            let term = match &b.term {
                Terminator::Goto(t) => json!({ "goto": point_label(*t) }),
                Terminator::Branch { cond, then_to, else_to } => json!({
                    "branch": render_condition(cond, vars),
                    "then": point_label(*then_to),
                    "else": point_label(*else_to),
                }),
                Terminator::Exit => json!("exit"),
            };
            json!({ "id": point_label(id), "stmts": stmts, "terminator": term })
        })
        .collect();
    let doc = json!({
        "schema": SCHEMA,
        "command": "merge",
        "program": path.display().to_string(),
        "program_hash": src.hash,
        "policy": cfg.merge_policy.to_string(),
        "vars": vars,
        "merged_blocks": list.len(),
        "blocks": blocks,
    });
    emit_json(cfg, &doc)
}

pub fn audit(path: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let (problem, src) = read_problem(path)?;
    let psm = build_psm(&problem.objective, &problem.constraints).with_context(|| path.display().to_string())?;
    let report =
        soundness_audit(&psm, &problem.objective, &problem.constraints, cfg.thetas, cfg.points, cfg.seed)?;
    let doc = json!({
        "schema": SCHEMA,
        "command": "audit",
        "problem": path.display().to_string(),
        "problem_hash": src.hash,
        "seed": cfg.seed,
        "thetas": cfg.thetas,
        "points": cfg.points,
        "clean": report.is_clean(),
        "report": report,
    });
    emit_json(cfg, &doc)
}

struct Run {
    hash: String,
    map: InvariantMap,
}

fn read_run(path: &Path) -> anyhow::Result<Run> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    if v["schema"] != json!(SCHEMA) || v["command"] != "analyze" {
        return Err(usage(format!("{} is not an analyze output with schema {SCHEMA}", path.display())));
    }
    let hash = v["program_hash"].as_str().unwrap_or_default().to_string();
    let map = InvariantMap::from_json(&v["invariants"]).with_context(|| path.display().to_string())?;
    Ok(Run { hash, map })
}

pub fn compare(a: &Path, b: &Path, cfg: &RunConfig, as_json: bool) -> anyhow::Result<()> {
    let base = read_run(a)?;
    let new = read_run(b)?;
    if base.hash != new.hash {
        return Err(usage(format!("{} and {} analyze different programs", a.display(), b.display())));
    }
    let total = compare_invariants(&base.map, &new.map).map_err(|e| usage(e.to_string()))?;
    let t = base.map.template();
    let mut points = Vec::new();
    for ((id, x), (_, y)) in base.map.iter().zip(new.map.iter()) {
        let (cmp, changes) = match (x, y) {
            (Some(x), Some(y)) => {
                let c = compare_elements(x, y)?;
                let changes: Vec<Value> = (0..t.n_rows())
                    .filter(|&i| x.bound(i) != y.bound(i))
                    .map(|i| json!({ "row": t.row_expr(i), "base": x.bound(i), "new": y.bound(i) }))
                    .collect();
                (json!(c), changes)
            }
            (Some(_), None) => (json!({ "strengthened": true, "new_constraint_count": 0, "tightened_count": 0 }), vec![]),
            _ => (json!({ "strengthened": false, "new_constraint_count": 0, "tightened_count": 0 }), vec![]),
        };
        points.push(json!({
            "id": id,
            "base_reachable": x.is_some(),
            "new_reachable": y.is_some(),
            "comparison": cmp,
            "changes": changes,
        }));
    }
    if as_json {
        let doc = json!({
            "schema": SCHEMA,
            "command": "compare",
            "base": a.display().to_string(),
            "new": b.display().to_string(),
            "metrics": total,
            "points": points,
        });
        return emit_json(cfg, &doc);
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:<8}  {:>12}  {:>5}  {:>9}", "point", "strengthened", "new", "tightened");
    for p in &points {
        let c = &p["comparison"];
        let _ = writeln!(
            s,
            "{:<8}  {:>12}  {:>5}  {:>9}",
            p["id"].as_str().unwrap_or(""),
            if c["strengthened"] == true { "yes" } else { "no" },
            c["new_constraint_count"].as_u64().unwrap_or(0),
            c["tightened_count"].as_u64().unwrap_or(0)
        );
    }
    let _ = writeln!(
        s,
        "{:<8}  {:>12}  {:>5}  {:>9}",
        "total", total.strengthened_invariants, total.new_constraints, total.tightened_constraints
    );
    for p in &points {
        let id = p["id"].as_str().unwrap_or("");
        if p["base_reachable"] == true && p["new_reachable"] == false {
            let _ = writeln!(s, "\n{id}: now unreachable");
        }
        let changes = p["changes"].as_array().map(Vec::as_slice).unwrap_or(&[]);
        if !changes.is_empty() {
            let _ = writeln!(s, "\n{id}:");
            for c in changes {
                let show = |v: &Value| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                let _ = writeln!(s, "  {} >= {}  (was {})", c["row"].as_str().unwrap_or(""), show(&c["new"]), show(&c["base"]));
            }
        }
    }
    write_out(cfg.output_path.as_deref(), &s)
}

