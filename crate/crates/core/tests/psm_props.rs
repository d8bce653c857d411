mod common;

use common::criteria;

#[test]
fn zero_parameters_match_interval_relaxation() {
    let t = criteria::anchor(400, 11);
    assert!(t.clean(), "{t}");
}

#[test]
fn random_problems_pass_the_audit() {
    let t = criteria::audit_random(500, 50, 10_000, 12);
    assert!(t.fewest_thetas >= 50, "{t:?}");
    assert_eq!(t.violations, 0, "{t:?}");
}

#[test]
fn gradient_matches_central_differences() {
    let t = criteria::gradient(200, 13);
    assert!(t.coords > 0);
    assert!(t.matched as f64 >= 0.95 * t.coords as f64, "{t:?}");
}

#[test]
fn linear_bounds_approach_the_optimum() {
    let t = criteria::linear_completeness(100, 500, 14);
    assert_eq!(t.over, 0, "{t:?}");
    assert_eq!(t.below_anchor, 0, "{t:?}");
    assert!(t.within as f64 >= 0.9 * t.instances as f64, "{t:?}");
}
