//! Synthesis of parametric abstract transformers for template polyhedral
//! domains.
//!
//! For an update map of degree at most two and an input element `T v >= c`,
//! each template row's output bound is the minimum of a quadratic objective
//! over a polyhedron. [`psm::build_psm`] turns that minimum into a family of
//! sound lower bounds `L(θ)` over a polyhedral parameter space, and
//! [`agg::agg_search`] climbs `L` to pick a tight member. The [`interp`]
//! module runs the resulting transformers inside a small fixpoint analyzer;
//! [`oracle`] provides exact and sampled ground truth for testing.

pub mod agg;
pub mod domain;
pub mod error;
pub mod eum;
pub mod ext;
pub mod interp;
pub mod ir;
pub mod oracle;
pub mod par;
pub mod poly;
pub mod psm;
pub mod syntax;
pub mod transformer;

pub use domain::{
    compare_elements, element_to_constraints, extract_box, make_template, membership, AbstractElement,
    Comparison, ConstraintSystem, Interval, IntervalBox, Template, TemplateKind,
};
pub use error::{DegreeError, Error, Result};
pub use ext::ExtScalar;
pub use poly::{effective_objective, parse_quad, QuadPoly};
