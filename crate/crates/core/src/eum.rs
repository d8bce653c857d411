//! Effective update maps and greedy merging of assignment runs.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::ConstraintSystem;
use crate::error::DegreeError;
use crate::ir::{Assignment, BlockId, Instr, Program, Terminator};
use crate::poly::{Polynomial, QuadPoly};

/// Flat map from variables to degree-≤2 polynomials over pre-block values.
/// Variables without an entry are unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveUpdateMap {
    n: usize,
    updates: BTreeMap<usize, QuadPoly>,
}

impl EffectiveUpdateMap {
    pub fn identity(n: usize) -> Self {
        EffectiveUpdateMap { n, updates: BTreeMap::new() }
    }

    /// Builds a map from explicit images; entries are taken as already flat.
    pub fn from_updates(n: usize, updates: impl IntoIterator<Item = (usize, QuadPoly)>) -> Self {
        EffectiveUpdateMap { n, updates: updates.into_iter().collect() }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    /// `σ(v)`, the identity polynomial when `v` is not updated.
    pub fn get(&self, v: usize) -> Cow<'_, QuadPoly> {
        match self.updates.get(&v) {
            Some(p) => Cow::Borrowed(p),
            None => Cow::Owned(QuadPoly::var(self.n, v)),
        }
    }

    pub fn updates(&self) -> &BTreeMap<usize, QuadPoly> {
        &self.updates
    }

    /// Applies all updates simultaneously to a concrete state.
    pub fn apply_point(&self, state: &[f64]) -> Vec<f64> {
        let mut out = state.to_vec();
        for (&v, p) in &self.updates {
            out[v] = p.eval(state).expect("state has the map's dimension");
        }
        out
    }

    /// Every stored image has degree ≤ 2 by construction.
    pub fn is_quadratic_bounded(&self) -> bool {
        self.updates.values().all(|p| p.degree() <= 2)
    }
}

/// Update map with unrestricted degree; used to test candidate runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicUpdateMap {
    images: Vec<Polynomial>,
    assigned: Vec<bool>,
}

impl SymbolicUpdateMap {
    pub fn image(&self, v: usize) -> &Polynomial {
        &self.images[v]
    }

    /// Narrows to an [`EffectiveUpdateMap`] when every image is quadratic.
    pub fn to_effective(&self) -> Result<EffectiveUpdateMap, DegreeError> {
        let n = self.images.len();
        let mut updates = BTreeMap::new();
        for (v, p) in self.images.iter().enumerate() {
            if self.assigned[v] {
                updates.insert(v, p.to_quad()?);
            }
        }
        Ok(EffectiveUpdateMap { n, updates })
    }
}

/// Folds the sequence left to right, substituting earlier images, without a
/// degree cap.
pub fn compute_symbolic_map(instrs: &[Assignment], n: usize) -> SymbolicUpdateMap {
    let mut images: Vec<Polynomial> = (0..n).map(|v| Polynomial::var(n, v)).collect();
    let mut assigned = vec![false; n];
    for a in instrs {
        images[a.target] = a.rhs.to_polynomial().compose(&images);
        assigned[a.target] = true;
    }
    SymbolicUpdateMap { images, assigned }
}

/// True iff every image has degree ≤ 2.
pub fn is_quadratic_bounded(sigma: &SymbolicUpdateMap) -> bool {
    sigma.images.iter().all(|p| p.degree() <= 2)
}

/// The effective update map of an assignment sequence.
///
/// Fails at the first instruction whose flattened right-hand side exceeds
/// degree two; the error carries that instruction's zero-based index.
pub fn compute_eum(instrs: &[Assignment], n: usize) -> Result<EffectiveUpdateMap, DegreeError> {
    let mut images: Vec<Polynomial> = (0..n).map(|v| Polynomial::var(n, v)).collect();
    let mut updates = BTreeMap::new();
    for (idx, a) in instrs.iter().enumerate() {
        let flat = a.rhs.to_polynomial().compose(&images);
        let quad = flat.to_quad().map_err(|e| DegreeError { instruction: Some(idx), ..e })?;
        images[a.target] = flat;
        updates.insert(a.target, quad);
    }
    Ok(EffectiveUpdateMap { n, updates })
}

/// Guard constraints `P v <= d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GuardSystem(pub ConstraintSystem);

/// A merged run of assignments with its cached update map.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    instrs: Vec<Assignment>,
    sigma: EffectiveUpdateMap,
    guard: Option<GuardSystem>,
}

impl Block {
    pub fn new(instrs: Vec<Assignment>, n: usize) -> Result<Self, DegreeError> {
        let sigma = compute_eum(&instrs, n)?;
        Ok(Block { instrs, sigma, guard: None })
    }

    pub fn instrs(&self) -> &[Assignment] {
        &self.instrs
    }

    pub fn sigma(&self) -> &EffectiveUpdateMap {
        &self.sigma
    }

    pub fn guard(&self) -> Option<&GuardSystem> {
        self.guard.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergePolicy {
    /// Merge every maximal quadratic-bounded run.
    MergeAll,
    /// Merge only runs holding at least one quadratic assignment.
    QuadOnly,
    /// Merge runs of at most this many assignments.
    MaxLen(usize),
}

impl std::str::FromStr for MergePolicy {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "all" | "merge_all" => Ok(MergePolicy::MergeAll),
            "quad" | "quad_only" => Ok(MergePolicy::QuadOnly),
            "none" => Ok(MergePolicy::MaxLen(1)),
            _ => {
                let k = s
                    .strip_prefix("max_len:")
                    .or_else(|| s.strip_prefix("maxlen:"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0);
                k.map(MergePolicy::MaxLen).ok_or_else(|| {
                    crate::error::Error::Config(format!(
                        "unknown merge policy `{s}` (expected all, quad, none or max_len:K)"
                    ))
                })
            }
        }
    }
}

impl std::fmt::Display for MergePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MergePolicy::MergeAll => write!(f, "all"),
            MergePolicy::QuadOnly => write!(f, "quad"),
            MergePolicy::MaxLen(k) => write!(f, "max_len:{k}"),
        }
    }
}

/// A statement of the transformed program.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// Merged run, analysed with the synthesized transformer.
    Merged(Block),
    /// Assignment left out of merging, analysed with the baseline.
    Single(Assignment),
    Assume(Vec<crate::syntax::LinearCondition>),
    Assert(Vec<crate::syntax::LinearCondition>),
    Havoc(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedBasicBlock {
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
}

/// The program after merging; block ids match the source program.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedProgram {
    pub vars: Vec<String>,
    pub blocks: Vec<MergedBasicBlock>,
    pub entry: BlockId,
}

impl MergedProgram {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn merged_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().flat_map(|b| {
            b.stmts.iter().filter_map(|s| match s {
                Stmt::Merged(blk) => Some(blk),
                _ => None,
            })
        })
    }
}

fn flush(run: &mut Vec<Assignment>, policy: MergePolicy, n: usize, out: &mut Vec<Stmt>) {
    if run.is_empty() {
        return;
    }
    let run = std::mem::take(run);
    if policy == MergePolicy::QuadOnly && !run.iter().any(Assignment::is_quadratic) {
        out.extend(run.into_iter().map(Stmt::Single));
    } else {
        let blk = Block::new(run, n).expect("runs are kept quadratic-bounded");
        out.push(Stmt::Merged(blk));
    }
}

/// Splits one instruction list into statements (greedy maximal runs).
pub fn merge_instrs(instrs: &[Instr], n: usize, policy: MergePolicy) -> Vec<Stmt> {
    let mut out = Vec::new();
    let mut run: Vec<Assignment> = Vec::new();
    for instr in instrs {
        match instr {
            Instr::Assign(a) => {
                if matches!(policy, MergePolicy::MaxLen(k) if run.len() >= k) {
                    flush(&mut run, policy, n, &mut out);
                }
                run.push(a.clone());
                if !is_quadratic_bounded(&compute_symbolic_map(&run, n)) {
                    let last = run.pop().expect("just pushed");
                    flush(&mut run, policy, n, &mut out);
                    run.push(last);
                }
            }
            other => {
                flush(&mut run, policy, n, &mut out);
                out.push(match other {
                    Instr::Assume(c) => Stmt::Assume(c.clone()),
                    Instr::Assert(c) => Stmt::Assert(c.clone()),
                    Instr::Havoc(v) => Stmt::Havoc(*v),
                    Instr::Assign(_) => unreachable!(),
                });
            }
        }
    }
    flush(&mut run, policy, n, &mut out);
    out
}

/// Rewrites every basic block, returning the new program and its merged blocks.
pub fn merge_blocks(program: &Program, policy: MergePolicy) -> (MergedProgram, Vec<Block>) {
    let n = program.n_vars();
    let stmts: Vec<Vec<Stmt>> =
        crate::par::map(&program.blocks, |b| merge_instrs(&b.instrs, n, policy));
    let blocks: Vec<MergedBasicBlock> = stmts
        .into_iter()
        .zip(&program.blocks)
        .map(|(stmts, b)| MergedBasicBlock { stmts, term: b.term.clone() })
        .collect();
    let merged = MergedProgram { vars: program.vars.clone(), blocks, entry: program.entry };
    let list = merged.merged_blocks().cloned().collect();
    (merged, list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_quad;

    fn assigns(names: &[&str], src: &[(&str, &str)]) -> Vec<Assignment> {
        src.iter()
            .map(|(t, rhs)| {
                let target = names.iter().position(|v| v == t).unwrap();
                Assignment::new(target, parse_quad(rhs, names).unwrap())
            })
            .collect()
    }

    #[test]
    fn eum_of_linear_sequence() {
        let names = ["a", "b", "c", "x", "y"];
        let s = compute_eum(&assigns(&names, &[("x", "a + b"), ("y", "x + c")]), 5).unwrap();
        assert_eq!(*s.get(3), parse_quad("a + b", &names).unwrap());
        assert_eq!(*s.get(4), parse_quad("a + b + c", &names).unwrap());
        assert_eq!(*s.get(0), QuadPoly::var(5, 0));
    }

    #[test]
    fn eum_reports_overflowing_instruction() {
        let names = ["a", "b", "c", "x", "y", "z"];
        let seq = assigns(&names, &[("x", "a + b"), ("y", "x*c"), ("z", "y*a")]);
        let err = compute_eum(&seq, 6).unwrap_err();
        assert_eq!(err.instruction, Some(2));
        assert_eq!(err.degree, 3);
        assert!(!is_quadratic_bounded(&compute_symbolic_map(&seq, 6)));
        assert!(is_quadratic_bounded(&compute_symbolic_map(&[], 6)));
    }

    #[test]
    fn independent_pairs_split() {
        let names = ["a", "b", "c", "d", "x", "y", "z", "w"];
        let seq = assigns(&names, &[("x", "2*a"), ("y", "x*b"), ("z", "y*c - a"), ("w", "z + d")]);
        let instrs: Vec<Instr> = seq.into_iter().map(Instr::Assign).collect();
        let stmts = merge_instrs(&instrs, 8, MergePolicy::MergeAll);
        assert_eq!(stmts.len(), 2);
        let (Stmt::Merged(b1), Stmt::Merged(b2)) = (&stmts[0], &stmts[1]) else {
            panic!("expected two merged blocks");
        };
        assert_eq!(b1.instrs().iter().map(|a| a.target).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(b2.instrs().iter().map(|a| a.target).collect::<Vec<_>>(), vec![6, 7]);
        assert_eq!(*b1.sigma().get(5), parse_quad("2*a*b", &names).unwrap());
        assert_eq!(*b2.sigma().get(7), parse_quad("y*c - a + d", &names).unwrap());
    }

    #[test]
    fn policies() {
        let names = ["x", "y"];
        let instrs: Vec<Instr> = assigns(&names, &[("x", "x + 1"), ("y", "y - 1")])
            .into_iter()
            .map(Instr::Assign)
            .collect();
        assert_eq!(merge_instrs(&instrs, 2, MergePolicy::MergeAll).len(), 1);
        let q = merge_instrs(&instrs, 2, MergePolicy::QuadOnly);
        assert!(q.iter().all(|s| matches!(s, Stmt::Single(_))));
        assert_eq!(merge_instrs(&instrs, 2, MergePolicy::MaxLen(1)).len(), 2);
        assert_eq!("max_len:3".parse::<MergePolicy>().unwrap(), MergePolicy::MaxLen(3));
        assert!("max_len:0".parse::<MergePolicy>().is_err());
    }

    #[test]
    fn non_assignments_close_runs() {
        let names = ["x"];
        let a = assigns(&names, &[("x", "x + 1")]).remove(0);
        let instrs = vec![Instr::Assign(a.clone()), Instr::Havoc(0), Instr::Assign(a)];
        let stmts = merge_instrs(&instrs, 1, MergePolicy::MergeAll);
        assert!(matches!(stmts.as_slice(), [Stmt::Merged(_), Stmt::Havoc(0), Stmt::Merged(_)]));
    }
}
