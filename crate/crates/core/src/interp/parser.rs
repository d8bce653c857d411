//! Parser for the mini imperative language.
//!
//! ```text
//! program := decl* stmt*
//! decl    := 'var' ident (',' ident)* ';'
//! stmt    := ident (':=' | '=') expr ';'
//!          | 'assume' '(' cond ('&&' cond)* ')' ';'
//!          | 'assert' '(' cond ('&&' cond)* ')' ';'
//!          | 'havoc' ident ';'
//!          | 'skip' ';'
//!          | 'if' '(' cond ')' '{' stmt* '}' ('else' '{' stmt* '}')?
//!          | 'while' '(' cond ')' '{' stmt* '}'
//! ```
//!
//! Expressions are polynomials of degree at most two; conditions are linear
//! comparisons (`<=`, `<`, `>=`, `>`, `==`). Comments start with `//` or `#`.

use crate::error::{Error, Result};
use crate::ir::{Assignment, BasicBlock, BlockId, Instr, Program, Terminator};
use crate::syntax::{parse_condition, parse_conjunction, parse_expr, Cursor, LinearCondition};

const KEYWORDS: &[&str] = &["var", "assume", "assert", "havoc", "skip", "if", "else", "while"];

struct Builder {
    vars: Vec<String>,
    blocks: Vec<BasicBlock>,
}

impl Builder {
    fn new_block(&mut self) -> BlockId {
        self.blocks.push(BasicBlock { instrs: Vec::new(), term: Terminator::Exit });
        self.blocks.len() - 1
    }

    fn push(&mut self, b: BlockId, instr: Instr) {
        self.blocks[b].instrs.push(instr);
    }

    fn seal(&mut self, b: BlockId, term: Terminator) {
        self.blocks[b].term = term;
    }

    fn var_index(&self, name: &str, line: usize, column: usize) -> Result<usize> {
        self.vars.iter().position(|v| v == name).ok_or_else(|| Error::Parse {
            line,
            column,
            message: format!("undeclared variable `{name}`"),
        })
    }

    fn branch_cond(&self, cur: &mut Cursor) -> Result<LinearCondition> {
        cur.expect_sym("(")?;
        let c = parse_condition(cur, &self.vars)?;
        if cur.at_sym("&&") {
            return cur.error("branch conditions take a single comparison; use nested `if` or `assume`");
        }
        cur.expect_sym(")")?;
        Ok(c)
    }

    fn body(&mut self, cur: &mut Cursor, mut b: BlockId) -> Result<BlockId> {
        cur.expect_sym("{")?;
        while !cur.eat_sym("}") {
            if cur.at_end() {
                return cur.error("unclosed `{`");
            }
            b = self.stmt(cur, b)?;
        }
        Ok(b)
    }

    /// Parses one statement starting in block `b`; returns the block where
    /// control continues.
    fn stmt(&mut self, cur: &mut Cursor, b: BlockId) -> Result<BlockId> {
        if cur.eat_keyword("skip") {
            cur.expect_sym(";")?;
            return Ok(b);
        }
        if cur.eat_keyword("assume") {
            cur.expect_sym("(")?;
            let c = parse_conjunction(cur, &self.vars)?;
            cur.expect_sym(")")?;
            cur.expect_sym(";")?;
            self.push(b, Instr::Assume(c));
            return Ok(b);
        }
        if cur.eat_keyword("assert") {
            cur.expect_sym("(")?;
            let c = parse_conjunction(cur, &self.vars)?;
            cur.expect_sym(")")?;
            cur.expect_sym(";")?;
            self.push(b, Instr::Assert(c));
            return Ok(b);
        }
        if cur.eat_keyword("havoc") {
            let (name, line, column) = cur.expect_ident()?;
            let v = self.var_index(&name, line, column)?;
            cur.expect_sym(";")?;
            self.push(b, Instr::Havoc(v));
            return Ok(b);
        }
        if cur.eat_keyword("if") {
            let cond = self.branch_cond(cur)?;
            let then_to = self.new_block();
            let else_to = self.new_block();
            self.seal(b, Terminator::Branch { cond, then_to, else_to });
            let then_end = self.body(cur, then_to)?;
            let else_end = if cur.eat_keyword("else") {
                if cur.at_keyword("if") {
                    self.stmt(cur, else_to)?
                } else {
                    self.body(cur, else_to)?
                }
            } else {
                else_to
            };
            let join = self.new_block();
            self.seal(then_end, Terminator::Goto(join));
            self.seal(else_end, Terminator::Goto(join));
            return Ok(join);
        }
        if cur.eat_keyword("while") {
            let head = self.new_block();
            self.seal(b, Terminator::Goto(head));
            let cond = self.branch_cond(cur)?;
            let body = self.new_block();
            let after = self.new_block();
            self.seal(head, Terminator::Branch { cond, then_to: body, else_to: after });
            let body_end = self.body(cur, body)?;
            self.seal(body_end, Terminator::Goto(head));
            return Ok(after);
        }
        if cur.at_keyword("var") {
            return cur.error("declarations must precede statements");
        }
        let (name, line, column) = cur.expect_ident()?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(Error::Parse { line, column, message: format!("unexpected keyword `{name}`") });
        }
        let target = self.var_index(&name, line, column)?;
        if !cur.eat_sym(":=") && !cur.eat_sym("=") {
            return cur.error("expected `:=`");
        }
        let (el, ec) = {
            let t = cur.peek();
            (t.line, t.column)
        };
        let rhs = parse_expr(cur, &self.vars)?;
        let rhs = rhs.to_quad_named(Some(&self.vars)).map_err(|e| Error::Parse {
            line: el,
            column: ec,
            message: format!("right-hand side has degree {} (monomial {}); at most 2 is supported", e.degree, e.monomial),
        })?;
        cur.expect_sym(";")?;
        self.push(b, Instr::Assign(Assignment::new(target, rhs)));
        Ok(b)
    }
}

pub fn parse_program(text: &str) -> Result<Program> {
    let mut cur = Cursor::new(text)?;
    let mut vars: Vec<String> = Vec::new();
    while cur.eat_keyword("var") {
        loop {
            let (name, line, column) = cur.expect_ident()?;
            if KEYWORDS.contains(&name.as_str()) {
                return Err(Error::Parse { line, column, message: format!("`{name}` is a keyword") });
            }
            if vars.contains(&name) {
                return Err(Error::Parse { line, column, message: format!("variable `{name}` declared twice") });
            }
            vars.push(name);
            if !cur.eat_sym(",") {
                break;
            }
        }
        cur.expect_sym(";")?;
    }
    if vars.is_empty() {
        return Err(Error::EmptyVariables);
    }
    let mut builder = Builder { vars, blocks: Vec::new() };
    let entry = builder.new_block();
    let mut b = entry;
    while !cur.at_end() {
        if cur.at_sym("}") {
            return cur.error("unmatched `}`");
        }
        b = builder.stmt(&mut cur, b)?;
    }
    builder.seal(b, Terminator::Exit);
    Ok(Program { vars: builder.vars, blocks: builder.blocks, entry })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUNNING_DIFF: &str = "var x, y;\nx := 0; y := 0;\nwhile (y <= 10) {\n  x := x + y;\n  y := y + 1;\n  x := x - y;\n}\n";

    #[test]
    fn loop_program_has_four_blocks() {
        let p = parse_program(RUNNING_DIFF).unwrap();
        assert_eq!(p.blocks.len(), 4);
        assert_eq!(p.blocks[0].instrs.len(), 2);
        assert!(matches!(p.blocks[1].term, Terminator::Branch { then_to: 2, else_to: 3, .. }));
        assert_eq!(p.blocks[2].term, Terminator::Goto(1));
        assert_eq!(p.blocks[3].term, Terminator::Exit);
    }

    #[test]
    fn empty_body() {
        let p = parse_program("var x;").unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].term, Terminator::Exit);
    }

    #[test]
    fn cubic_rhs_is_rejected() {
        let err = parse_program("var z, y, a, c;\nz = y*a*c;").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(parse_program("var x;\nx := q;"), Err(Error::Parse { line: 2, column: 6, .. })));
        assert!(matches!(parse_program("var x; x := 1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_program("var x, x;"), Err(Error::Parse { .. })));
        assert!(matches!(parse_program("x := 1;"), Err(Error::EmptyVariables) | Err(Error::Parse { .. })));
    }

    #[test]
    fn if_else_and_statements() {
        let src = "var x, y;\n# comment\nhavoc x; skip;\nif (x >= 0) { y := x; } else { y := -x; }\nassert(y >= 0);\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.blocks.len(), 4);
        assert_eq!(p.blocks[3].instrs.len(), 1);
        assert!(matches!(p.blocks[3].instrs[0], Instr::Assert(_)));
    }
}
