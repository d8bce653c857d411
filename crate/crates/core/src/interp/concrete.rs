//! Reference semantics over the reals.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ir::{Instr, Program, Terminator};

use super::point_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Exited,
    /// An `assume` or the path condition failed to hold.
    Blocked,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteRun {
    /// Program point and state at every block entry, then at the exit.
    pub visits: Vec<(String, Vec<f64>)>,
    pub outcome: Outcome,
    /// Points whose assertion failed.
    pub failed_asserts: Vec<String>,
}

/// Runs `program` from `init`; `havoc` draws uniformly from `[-1000, 1000]`.
pub fn execute<R: Rng + ?Sized>(program: &Program, init: &[f64], rng: &mut R, max_steps: usize) -> Result<ConcreteRun> {
    if init.len() != program.n_vars() {
        return Err(Error::DimensionMismatch { expected: program.n_vars(), found: init.len() });
    }
    let mut state = init.to_vec();
    let mut run = ConcreteRun { visits: Vec::new(), outcome: Outcome::StepLimit, failed_asserts: Vec::new() };
    let mut b = program.entry;
    for _ in 0..max_steps {
        run.visits.push((point_label(b), state.clone()));
        let block = &program.blocks[b];
        for instr in &block.instrs {
            match instr {
                Instr::Assign(a) => state[a.target] = a.rhs.eval(&state)?,
                Instr::Assume(c) => {
                    if !c.iter().all(|c| c.holds(&state)) {
                        run.outcome = Outcome::Blocked;
                        return Ok(run);
                    }
                }
                Instr::Assert(c) => {
                    if !c.iter().all(|c| c.holds(&state)) {
                        run.failed_asserts.push(point_label(b));
                    }
                }
                Instr::Havoc(v) => state[*v] = rng.gen_range(-1000.0..=1000.0),
            }
            if state.iter().any(|x| !x.is_finite()) {
                return Err(Error::NotANumber);
            }
        }
        b = match &block.term {
            Terminator::Goto(s) => *s,
            Terminator::Branch { cond, then_to, else_to } => {
                if cond.holds(&state) {
                    *then_to
                } else {
                    *else_to
                }
            }
            Terminator::Exit => {
                run.visits.push(("exit".into(), state));
                run.outcome = Outcome::Exited;
                return Ok(run);
            }
        };
    }
    Ok(run)
}
