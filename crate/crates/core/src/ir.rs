//! Control-flow graph of the mini imperative language.

use crate::poly::QuadPoly;
use crate::syntax::LinearCondition;

pub type BlockId = usize;

/// `target := rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: usize,
    pub rhs: QuadPoly,
}

impl Assignment {
    pub fn new(target: usize, rhs: QuadPoly) -> Self {
        Assignment { target, rhs }
    }

    pub fn is_quadratic(&self) -> bool {
        self.rhs.degree() == 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Assign(Assignment),
    /// Blocks execution unless every condition holds.
    Assume(Vec<LinearCondition>),
    /// Checked, never refines the state.
    Assert(Vec<LinearCondition>),
    /// Assigns an arbitrary value.
    Havoc(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminator {
    Goto(BlockId),
    Branch { cond: LinearCondition, then_to: BlockId, else_to: BlockId },
    Exit,
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Goto(b) => vec![*b],
            Terminator::Branch { then_to, else_to, .. } => vec![*then_to, *else_to],
            Terminator::Exit => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

/// A parsed program: variable table, blocks, entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub vars: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
}

impl Program {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (b, block) in self.blocks.iter().enumerate() {
            for s in block.term.successors() {
                preds[s].push(b);
            }
        }
        preds
    }
}

/// Reverse post-order from `entry` and the set of back-edge targets.
pub(crate) fn rpo_and_heads(succs: &[Vec<BlockId>], entry: BlockId) -> (Vec<BlockId>, Vec<bool>) {
    let n = succs.len();
    let mut state = vec![0u8; n];
    let mut heads = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack: Vec<(BlockId, usize)> = vec![(entry, 0)];
    state[entry] = 1;
    while let Some(&mut (b, ref mut next)) = stack.last_mut() {
        if *next < succs[b].len() {
            let s = succs[b][*next];
            *next += 1;
            match state[s] {
                0 => {
                    state[s] = 1;
                    stack.push((s, 0));
                }
                1 => heads[s] = true,
                _ => {}
            }
        } else {
            state[b] = 2;
            post.push(b);
            stack.pop();
        }
    }
    post.reverse();
    (post, heads)
}
