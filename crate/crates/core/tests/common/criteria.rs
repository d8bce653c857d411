//! Counted randomized checks. Each returns a tally so the same run can back
//! an ordinary test and a line of the acceptance report.
#![allow(dead_code)]

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ustad_core::agg::{agg_search, AggConfig, Objective};
use ustad_core::eum::{compute_eum, merge_instrs, MergePolicy, Stmt};
use ustad_core::interp::{analyze, compare_invariants, execute, parse_program, AnalysisConfig};
use ustad_core::ir::Assignment;
use ustad_core::membership;
use ustad_core::oracle::{lp_min_system, soundness_audit, to_rational, LpOutcome};
use ustad_core::poly::{parse_quad, QuadPoly};
use ustad_core::psm::build_psm;

use super::*;

#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub checked: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl Tally {
    pub fn fail(&mut self, why: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(why());
        }
    }

    pub fn clean(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for Tally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} checked, {} failed", self.checked, self.failures)?;
        if let Some(w) = &self.first_failure {
            write!(f, " (first: {w})")?;
        }
        Ok(())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// `L(0)` against the reference interval relaxation.
pub fn anchor(count: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    while t.checked < count {
        let (f, sys) = random_problem(&mut rng, 3, 5);
        let reference = interval_relaxation(&f, &sys);
        let psm = build_psm(&f, &sys).unwrap();
        let zero = vec![0.0; psm.dim()];
        let inside = psm.theta_space().contains(&zero);
        let l0 = psm.eval_l(&zero).unwrap();
        t.checked += 1;
        let ok = if reference == f64::NEG_INFINITY {
            !inside
        } else {
            inside && close(l0.to_f64(), reference, 1e-9)
        };
        if !ok {
            t.fail(|| format!("f = {}, L(0) = {l0}, reference {reference}, 0 in Θ: {inside}", f.display_with(&["a", "b", "c"])));
        }
    }
    t
}

/// Audit outcome over random problems whose parameter space is non-empty.
#[derive(Debug, Clone, Default)]
pub struct AuditTally {
    pub problems: usize,
    pub empty_skipped: usize,
    pub thetas: usize,
    pub fewest_thetas: usize,
    pub linear: usize,
    pub violations: usize,
    pub first: Option<String>,
}

pub fn audit_random(count: usize, n_theta: usize, n_points: usize, seed: u64) -> AuditTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AuditTally { fewest_thetas: usize::MAX, ..AuditTally::default() };
    let mut i = 0u64;
    while out.problems < count {
        i += 1;
        let (f, sys) = random_problem(&mut rng, 3, 5);
        let psm = build_psm(&f, &sys).unwrap();
        let r = soundness_audit(&psm, &f, &sys, n_theta, n_points, seed.wrapping_add(i)).unwrap();
        if r.thetas_checked == 0 {
            out.empty_skipped += 1;
            continue;
        }
        out.problems += 1;
        out.thetas += r.thetas_checked;
        out.fewest_thetas = out.fewest_thetas.min(r.thetas_checked);
        out.linear += f.is_linear() as usize;
        out.violations += r.violations.len();
        if out.first.is_none() {
            if let Some(v) = r.violations.first() {
                out.first = Some(format!("{v:?} for {f:?} over {:?} <= {:?}", sys.a(), sys.b()));
            }
        }
    }
    out
}

/// A feasible LP whose optimum is finite, with its exact value.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (QuadPoly, ConstraintSystem, Q) {
    loop {
        let n = rng.gen_range(1..=max_n);
        let m = rng.gen_range(1..=max_m);
        let sys = random_system(rng, n, m);
        let f = random_linear(rng, n);
        if let LpOutcome::Optimal { value, .. } = lp_min_system(f.linear_coeffs(), f.constant_term(), &sys).unwrap() {
            return (f, sys, value);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompletenessTally {
    pub instances: usize,
    pub within: usize,
    pub over: usize,
    pub below_anchor: usize,
    pub worst_gap: f64,
    pub worst_anchor_shortfall: f64,
}

pub fn linear_completeness(count: usize, epochs: usize, seed: u64) -> CompletenessTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CompletenessTally::default();
    let cfg = AggConfig::default().with_epochs(epochs);
    for _ in 0..count {
        let (f, sys, opt) = random_bounded_lp(&mut rng, 4, 6);
        let opt = ustad_core::oracle::rational_to_f64(&opt);
        let psm = build_psm(&f, &sys).unwrap();
        let r = agg_search(&psm, &Objective::Precision, &cfg);
        let b = r.bound_best.to_f64();
        out.instances += 1;
        if b > opt + 1e-9 {
            out.over += 1;
        }
        if (opt - b).abs() <= 1e-2 {
            out.within += 1;
        }
        out.worst_gap = out.worst_gap.max(opt - b);
        let anchor = interval_relaxation(&f, &sys);
        if anchor.is_finite() {
            out.worst_anchor_shortfall = out.worst_anchor_shortfall.max(anchor - b);
        }
        if b < anchor - 1e-9 * anchor.abs().max(1.0) {
            out.below_anchor += 1;
        }
    }
    out
}

/// Random interior points of Θ away from its boundary.
fn interior_thetas(psm: &ustad_core::psm::ParametricScalarMap, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let sp = psm.theta_space();
    let mut out = Vec::new();
    if sp.is_flagged_infeasible() {
        return out;
    }
    for _ in 0..4 * k {
        if out.len() == k {
            break;
        }
        let draw: Vec<f64> = (0..psm.dim()).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        if let Some(t) = project_inside(sp.m(), sp.h(), draw, 1e-3) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct GradientTally {
    pub psms: usize,
    pub coords: usize,
    pub skipped: usize,
    pub matched: usize,
}

/// Reported gradient against central differences, skipping stencils that
/// cross a branch switch.
pub fn gradient(count: usize, seed: u64) -> GradientTally {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientTally::default();
    while out.psms < count {
        let (f, sys) = random_problem(&mut rng, 3, 5);
        let psm = build_psm(&f, &sys).unwrap();
        let thetas = interior_thetas(&psm, 3, &mut rng);
        if thetas.is_empty() {
            continue;
        }
        out.psms += 1;
        for theta in thetas {
            let g = psm.grad_l(&theta).unwrap();
            for j in 0..psm.dim() {
                let mut e = vec![0.0; psm.dim()];
                e[j] = 1.0;
                let mut lo = theta.clone();
                lo[j] -= H;
                let mut hi = theta.clone();
                hi[j] += H;
                if psm.first_kink(&lo, &e, 0.0) <= 2.0 * H {
                    out.skipped += 1;
                    continue;
                }
                let (a, b) = (psm.evaluate_unchecked(&lo).value, psm.evaluate_unchecked(&hi).value);
                if !a.is_finite() || !b.is_finite() {
                    out.skipped += 1;
                    continue;
                }
                out.coords += 1;
                let fd = (b - a) / (2.0 * H);
                if (fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1.0) {
                    out.matched += 1;
                }
            }
        }
    }
    out
}

fn random_rhs(rng: &mut ChaCha8Rng, n: usize) -> QuadPoly {
    let mut c = vec![0.0; n];
    for _ in 0..rng.gen_range(1..=2) {
        c[rng.gen_range(0..n)] += rng.gen_range(-3..=3) as f64;
    }
    let d = rng.gen_range(-3..=3) as f64;
    let lin = QuadPoly::linear(c, d);
    if rng.gen_bool(0.4) {
        let (i, k) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let a = [-2.0, -1.0, 1.0, 2.0][rng.gen_range(0..4)];
        let quad = if i == k {
            QuadPoly::from_parts(n, [], [(i, a)], vec![0.0; n], 0.0)
        } else {
            QuadPoly::from_parts(n, [((i, k), a)], [], vec![0.0; n], 0.0)
        };
        lin.add(&quad.unwrap())
    } else {
        lin
    }
}

/// Sequences whose update map stays quadratic; merged against stepwise
/// execution on integer states.
pub fn eum_semantics(count: usize, states: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    let mut admissible = 0;
    while admissible < count {
        let n = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=6);
        let instrs: Vec<Assignment> =
            (0..len).map(|_| Assignment::new(rng.gen_range(0..n), random_rhs(&mut rng, n))).collect();
        let Ok(sigma) = compute_eum(&instrs, n) else { continue };
        admissible += 1;
        for _ in 0..states {
            let init: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
            let mut seq = init.clone();
            for a in &instrs {
                seq[a.target] = a.rhs.eval(&seq).unwrap();
            }
            let merged = sigma.apply_point(&init);
            t.checked += 1;
            if merged != seq {
                t.fail(|| format!("{instrs:?} at {init:?}: merged {merged:?}, stepwise {seq:?}"));
            }
        }
    }
    t
}

const NAMES: [&str; 3] = ["x", "y", "z"];

fn lin_text(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut s = format!("{}", rng.gen_range(-5..=5));
    for v in NAMES.iter().take(n) {
        let k: i32 = rng.gen_range(-2..=2);
        if k != 0 {
            s += &format!(" {} {}*{v}", if k < 0 { '-' } else { '+' }, k.abs());
        }
    }
    s
}

fn rhs_text(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut s = lin_text(rng, n);
    if rng.gen_bool(0.3) {
        let (a, b) = (NAMES[rng.gen_range(0..n)], NAMES[rng.gen_range(0..n)]);
        s += &format!(" {} {a}*{b}", if rng.gen_bool(0.5) { '+' } else { '-' });
    }
    s
}

fn cond_text(rng: &mut ChaCha8Rng, n: usize) -> String {
    let rel = ["<=", "<", ">=", ">", "=="][rng.gen_range(0..5)];
    let mut lhs = String::new();
    for v in NAMES.iter().take(n) {
        let k: i32 = rng.gen_range(-2..=2);
        if k != 0 {
            lhs += &format!(" {} {}*{v}", if k < 0 { '-' } else { '+' }, k.abs());
        }
    }
    if lhs.is_empty() {
        lhs = format!(" + 1*{}", NAMES[0]);
    }
    format!("0{lhs} {rel} {}", rng.gen_range(-6..=6))
}

fn stmts_text(rng: &mut ChaCha8Rng, n: usize, depth: usize, out: &mut String) {
    for _ in 0..rng.gen_range(1..=4) {
        let v = NAMES[rng.gen_range(0..n)];
        match rng.gen_range(0..10) {
            0..=4 => *out += &format!("{v} := {};\n", rhs_text(rng, n)),
            5 if depth < 2 => {
                *out += &format!("if ({}) {{\n", cond_text(rng, n));
                stmts_text(rng, n, depth + 1, out);
                *out += "} else {\n";
                stmts_text(rng, n, depth + 1, out);
                *out += "}\n";
            }
            6 => *out += &format!("assume({});\n", cond_text(rng, n)),
            7 => *out += &format!("havoc {v};\n"),
            _ => *out += &format!("{v} := {};\n", lin_text(rng, n)),
        }
    }
}

/// Source text of a random program without loops.
pub fn random_loop_free(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut s = format!("var {};\n", NAMES[..n].join(", "));
    stmts_text(rng, n, 0, &mut s);
    s
}

/// Source text of a counted loop over random affine and quadratic updates.
pub fn random_loop(rng: &mut ChaCha8Rng) -> String {
    let n = 3;
    let mut s = String::from("var x, y, z;\n");
    for v in &NAMES[..2] {
        s += &format!("{v} := {};\n", rng.gen_range(-5..=5));
    }
    s += &format!("z := 0;\nwhile (z <= {}) {{\n", rng.gen_range(3..=20));
    let mut body = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        let v = NAMES[rng.gen_range(0..2)];
        body += &format!("{v} := {};\n", rhs_text(rng, n));
    }
    s += &body;
    s += "z := z + 1;\n}\n";
    s
}

/// Concrete runs of random loop-free programs against their invariants.
pub fn analyzer_soundness(count: usize, runs: usize, epochs: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    let cfg = AnalysisConfig { agg: AggConfig::default().with_epochs(epochs), ..AnalysisConfig::default() };
    for _ in 0..count {
        let src = random_loop_free(&mut rng);
        let prog = parse_program(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let a = analyze(&prog, &cfg).unwrap();
        for _ in 0..runs {
            let init: Vec<f64> = (0..prog.n_vars()).map(|_| rng.gen_range(-20..=20) as f64).collect();
            let run = execute(&prog, &init, &mut rng, 1000).unwrap();
            for (label, state) in &run.visits {
                t.checked += 1;
                let inv = a.invariants.get(label).expect("every point has an entry");
                let ok = match inv {
                    Some(e) => membership(e, state).unwrap(),
                    None => false,
                };
                if !ok {
                    t.fail(|| {
                        let c = inv.map(|e| e.constraint_strings()).unwrap_or_default();
                        format!("{label} state {state:?} outside {c:?}\n{src}")
                    });
                }
            }
        }
    }
    t
}

/// Metric triples `(strengthened, new, tightened)` for `R = 0..=max_k`
/// against the `R = 0` map.
pub fn epoch_metrics(src: &str, max_k: usize) -> Vec<(usize, usize, usize)> {
    let prog = parse_program(src).unwrap();
    let run = |k: usize| {
        let cfg = AnalysisConfig { agg: AggConfig::default().with_epochs(k), ..AnalysisConfig::default() };
        analyze(&prog, &cfg).unwrap().invariants
    };
    let base = run(0);
    (0..=max_k)
        .map(|k| {
            let c = compare_invariants(&base, &run(k)).unwrap();
            (c.strengthened_invariants, c.new_constraints, c.tightened_constraints)
        })
        .collect()
}

pub fn non_decreasing(m: &[(usize, usize, usize)]) -> bool {
    m.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1 && w[0].2 <= w[1].2)
}

/// Exact simplex against vertex enumeration on bounded instances.
pub fn simplex_vs_vertices(count: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    while t.checked < count {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(n..=8);
        let sys = random_system(&mut rng, n, m);
        let f = random_linear(&mut rng, n);
        let lp = lp_min_system(f.linear_coeffs(), f.constant_term(), &sys).unwrap();
        let LpOutcome::Optimal { value, point } = lp else { continue };
        let Some(v) = vertex_min(f.linear_coeffs(), f.constant_term(), &sys) else { continue };
        t.checked += 1;
        let on_region = sys.a().iter().zip(sys.b()).all(|(r, &b)| {
            let lhs: Q = r.iter().zip(&point).map(|(a, x)| qf(*a) * x).sum();
            lhs <= qf(b)
        });
        if v != value || !on_region {
            t.fail(|| format!("simplex {value}, vertices {v}, point feasible {on_region}"));
        }
    }
    t
}

/// `sample_min` never undercuts the exact LP optimum.
pub fn sample_vs_lp(count: usize, n_samples: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for i in 0..count {
        let (f, sys, opt) = random_bounded_lp(&mut rng, 4, 8);
        let s = ustad_core::oracle::sample_min(&f, &sys, n_samples, i as u64).unwrap();
        t.checked += 1;
        let slack = to_rational(1e-9 * s.value.abs().max(1.0)).unwrap();
        if to_rational(s.value).unwrap() + slack < opt {
            t.fail(|| format!("sampled {} below optimum {opt}", s.value));
        }
    }
    t
}

/// The four-assignment example must merge into `{x, y}` and `{z, w}` with
/// `y = 2ab` and `w = yc - a + d`.
pub fn independent_pairs_split() -> Result<(), String> {
    let src = "var a, b, c, d, x, y, z, w;\nx := 2*a;\ny := x*b;\nz := y*c - a;\nw := z + d;\n";
    let p = parse_program(src).map_err(|e| e.to_string())?;
    let names: Vec<&str> = p.vars.iter().map(String::as_str).collect();
    let stmts = merge_instrs(&p.blocks[p.entry].instrs, names.len(), MergePolicy::MergeAll);
    let blocks = stmts
        .iter()
        .map(|s| match s {
            Stmt::Merged(b) => Ok(b),
            other => Err(format!("unmerged statement {other:?}")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if blocks.len() != 2 {
        return Err(format!("{} blocks", blocks.len()));
    }
    let targets = |i: usize| blocks[i].sigma().updates().keys().map(|&v| names[v]).collect::<Vec<_>>();
    if targets(0) != ["x", "y"] || targets(1) != ["z", "w"] {
        return Err(format!("blocks {:?} and {:?}", targets(0), targets(1)));
    }
    let want = |s: &str| parse_quad(s, &names).unwrap();
    let (y, w) = (5, 7);
    if *blocks[0].sigma().get(y) != want("2*a*b") {
        return Err(format!("y -> {}", blocks[0].sigma().get(y).display_with(&names)));
    }
    if *blocks[1].sigma().get(w) != want("y*c - a + d") {
        return Err(format!("w -> {}", blocks[1].sigma().get(w).display_with(&names)));
    }
    Ok(())
}
