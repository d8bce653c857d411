//! Mini imperative language: parser, abstract interpreter and a concrete
//! reference executor.

mod analyzer;
mod concrete;
mod parser;

pub use analyzer::{
    analyze, analyze_with_template, compare_invariants, render_condition, Analysis, AnalysisConfig,
    AnalysisStats, AssertionOutcome, InvariantComparison, InvariantMap,
};
pub use concrete::{execute, ConcreteRun, Outcome};
pub use parser::parse_program;

use crate::ir::BlockId;

/// Name of the program point at the entry of block `b`.
pub fn point_label(b: BlockId) -> String {
    format!("bb{b}")
}
