use std::sync::Arc;
use std::time::Instant;

use ustad_core::agg::{agg_search, AggConfig, Objective};
use ustad_core::domain::{make_template, AbstractElement, ConstraintSystem, TemplateKind};
use ustad_core::eum::EffectiveUpdateMap;
use ustad_core::ext::ExtScalar;
use ustad_core::interp::{analyze, parse_program, AnalysisConfig};
use ustad_core::poly::parse_quad;
use ustad_core::psm::build_psm;
use ustad_core::transformer::{apply, interval_relaxation_output, synthesize_family, QgoOperator};

fn linear_sys() -> ConstraintSystem {
    ConstraintSystem::from_rows(
        2,
        vec![vec![1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
        vec![10.0, -1.0, 11.0, -1.0, 21.0],
    )
    .unwrap()
}

fn quad_sys() -> ConstraintSystem {
    ConstraintSystem::from_rows(
        2,
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![-1.0, -1.0], vec![-1.0, 1.0]],
        vec![0.0, 0.0, 16.0, 0.0, 16.0],
    )
    .unwrap()
}

#[test]
fn linear_table_values() {
    let f = parse_quad("y - x", &["x", "y"]).unwrap();
    let p = build_psm(&f, &linear_sys()).unwrap();
    assert_eq!(p.eval_l(&[0.0, 0.0]).unwrap(), ExtScalar::Finite(-9.0));
    assert_eq!(p.eval_l(&[1.0, 0.0]).unwrap(), ExtScalar::Finite(1.0));
    assert!((p.eval_l(&[0.3, 0.0]).unwrap().to_f64() + 6.0).abs() < 1e-9);
    assert!((p.eval_l(&[0.6, 0.0]).unwrap().to_f64() + 3.0).abs() < 1e-9);
    assert_eq!(p.eval_l(&[-1.0, 0.0]).unwrap(), ExtScalar::NegInf);
}

#[test]
fn linear_search_reaches_optimum() {
    let f = parse_quad("y - x", &["x", "y"]).unwrap();
    let p = build_psm(&f, &linear_sys()).unwrap();
    let start = Instant::now();
    let r = agg_search(&p, &Objective::Precision, &AggConfig::default().with_epochs(50));
    assert!(start.elapsed().as_secs_f64() < 0.1);
    assert!((r.bound_best.to_f64() - 1.0).abs() <= 1e-6, "{}", r.bound_best);
}

#[test]
fn quadratic_search_reaches_quarter() {
    let f = parse_quad("x^2 - x", &["x", "y"]).unwrap();
    let p = build_psm(&f, &quad_sys()).unwrap();
    assert_eq!(p.eval_l(&vec![0.0; p.dim()]).unwrap(), ExtScalar::NegInf);
    let start = Instant::now();
    let r = agg_search(&p, &Objective::Precision, &AggConfig::default().with_epochs(200));
    assert!(start.elapsed().as_secs_f64() < 0.5);
    let b = r.bound_best.to_f64();
    assert!((-0.2501..=-0.25).contains(&b), "{b}");
}

#[test]
fn quadratic_transformer_row() {
    let names = ["x", "y"];
    let t = Arc::new(make_template(TemplateKind::Octagon, &names).unwrap());
    // x >= 0, 0 <= y <= 16, x + y >= 0, x - y >= -16
    let mut b = vec![ExtScalar::NegInf; 8];
    b[0] = ExtScalar::Finite(0.0);
    b[2] = ExtScalar::Finite(0.0);
    b[3] = ExtScalar::Finite(-16.0);
    b[4] = ExtScalar::Finite(0.0);
    b[5] = ExtScalar::Finite(-16.0);
    let input = AbstractElement::new(t.clone(), b).unwrap();
    let sigma = EffectiveUpdateMap::from_updates(2, [(1, parse_quad("x^2", &names).unwrap())]);
    let fam = synthesize_family(&t, &QgoOperator::new(sigma, None).unwrap(), &input).unwrap();
    // -x + y row
    assert_eq!(interval_relaxation_output(&fam).bound(6), ExtScalar::NegInf);
    let out = apply(&fam, &Objective::Precision, &AggConfig::default().with_epochs(200));
    assert!(out.bound(6) >= ExtScalar::Finite(-0.25 - 1e-6), "{}", out.bound(6));
}

fn entails(state: &AbstractElement, row: usize, c: f64) -> bool {
    state.bound(row) >= ExtScalar::Finite(c)
}

#[test]
fn loop_invariant_x_nonpositive() {
    let src = include_str!("../../cli/programs/running_diff.ust");
    let p = parse_program(src).unwrap();
    let cfg = AnalysisConfig { agg: AggConfig::default().with_epochs(5), ..AnalysisConfig::default() };
    let start = Instant::now();
    let a = analyze(&p, &cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let head = a.invariants.block(a.loop_heads[0]).unwrap();
    assert!(entails(head, 1, 0.0), "{:?}", head.constraint_strings());
}

#[test]
fn loop_invariant_difference_equality() {
    let src = include_str!("../../cli/programs/fixed_gap.ust");
    let p = parse_program(src).unwrap();
    let cfg = AnalysisConfig { agg: AggConfig::default().with_epochs(5), ..AnalysisConfig::default() };
    let a = analyze(&p, &cfg).unwrap();
    let head = a.invariants.block(a.loop_heads[0]).unwrap();
    assert!(entails(head, 5, 20.0) && entails(head, 6, -20.0), "{:?}", head.constraint_strings());
    assert!(a.assertions.iter().all(|o| o.proven), "{:?}", a.assertions);
}
