mod common;

use common::criteria;
use proptest::prelude::*;
use ustad_core::eum::{merge_instrs, MergePolicy, Stmt};
use ustad_core::ir::{Assignment, Instr};
use ustad_core::poly::QuadPoly;
use ustad_core::syntax::{LinearCondition, Relation};

#[test]
fn merged_execution_equals_stepwise() {
    let t = criteria::eum_semantics(500, 20, 31);
    assert!(t.clean(), "{t}");
}

#[test]
fn independent_pairs_split_in_two() {
    criteria::independent_pairs_split().unwrap();
}

const N: usize = 4;

fn rhs() -> impl Strategy<Value = QuadPoly> {
    (
        proptest::collection::vec(-3i32..=3, N),
        -3i32..=3,
        proptest::option::of((0..N, 0..N, -2i32..=2)),
    )
        .prop_map(|(c, d, q)| {
            let lin = QuadPoly::linear(c.into_iter().map(f64::from).collect(), d.into());
            match q {
                Some((i, k, a)) if i == k => lin.add(&QuadPoly::from_parts(N, [], [(i, a.into())], vec![0.0; N], 0.0).unwrap()),
                Some((i, k, a)) => lin.add(&QuadPoly::from_parts(N, [((i, k), a.into())], [], vec![0.0; N], 0.0).unwrap()),
                None => lin,
            }
        })
}

fn instr() -> impl Strategy<Value = Instr> {
    prop_oneof![
        4 => (0..N, rhs()).prop_map(|(t, r)| Instr::Assign(Assignment::new(t, r))),
        1 => (0..N).prop_map(Instr::Havoc),
        1 => (proptest::collection::vec(-2i32..=2, N), -3i32..=3).prop_map(|(c, k)| {
            Instr::Assume(vec![LinearCondition { coeffs: c.into_iter().map(f64::from).collect(), constant: k.into(), rel: Relation::Le }])
        }),
    ]
}

fn policy() -> impl Strategy<Value = MergePolicy> {
    prop_oneof![Just(MergePolicy::MergeAll), Just(MergePolicy::QuadOnly), (1usize..4).prop_map(MergePolicy::MaxLen)]
}

fn flatten(stmts: &[Stmt]) -> Vec<Instr> {
    let mut out = Vec::new();
    for s in stmts {
        match s {
            Stmt::Merged(b) => out.extend(b.instrs().iter().cloned().map(Instr::Assign)),
            Stmt::Single(a) => out.push(Instr::Assign(a.clone())),
            Stmt::Assume(c) => out.push(Instr::Assume(c.clone())),
            Stmt::Assert(c) => out.push(Instr::Assert(c.clone())),
            Stmt::Havoc(v) => out.push(Instr::Havoc(*v)),
        }
    }
    out
}

proptest! {
    #[test]
    fn merging_partitions_the_block(instrs in proptest::collection::vec(instr(), 0..10), pol in policy()) {
        let stmts = merge_instrs(&instrs, N, pol);
        prop_assert_eq!(flatten(&stmts), instrs);
        for s in &stmts {
            if let Stmt::Merged(b) = s {
                prop_assert!(b.sigma().is_quadratic_bounded());
                if let MergePolicy::MaxLen(k) = pol {
                    prop_assert!(b.instrs().len() <= k);
                }
                if pol == MergePolicy::QuadOnly {
                    prop_assert!(b.instrs().iter().any(Assignment::is_quadratic));
                }
            }
        }
    }
}
