//! Shared lexer and expression parser for polynomials, conditions, programs
//! and problem files.

use crate::error::{Error, Result};
use crate::domain::ConstraintSystem;
use crate::poly::{Polynomial, QuadPoly};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

const SYMBOLS: &[&str] = &[
    ":=", "<=", ">=", "==", "!=", "&&", "+", "-", "*", "^", "(", ")", "{", "}", ";", ",", "<", ">",
    "=", ":",
];

/// Splits `text` into tokens. `//` and `#` start line comments.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let ch = chars[i];
        let start_col = col;
        if ch == '\n' {
            out.push(Token { tok: Tok::Newline, line, column: col });
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if ch == '#' || (ch == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let s: String = chars[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric() || **c == '_')
                .collect();
            i += s.len();
            col += s.len();
            out.push(Token { tok: Tok::Ident(s), line, column: start_col });
            continue;
        }
        if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let s: String = chars[i..j].iter().collect();
            let value = s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: start_col,
                message: format!("malformed number `{s}`"),
            })?;
            col += j - i;
            i = j;
            out.push(Token { tok: Tok::Num(value), line, column: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                col += sym.len();
                out.push(Token { tok: Tok::Sym(sym), line, column: start_col });
            }
            None => {
                return Err(Error::Parse {
                    line,
                    column: start_col,
                    message: format!("unexpected character `{ch}`"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

/// A token stream with one-token lookahead. Newlines are skipped unless the
/// cursor is in line mode.
#[derive(Debug, Clone)]
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    line_mode: bool,
}

impl Cursor {
    pub fn new(text: &str) -> Result<Self> {
        Ok(Cursor { toks: tokenize(text)?, pos: 0, line_mode: false })
    }

    /// A cursor that reports newlines as tokens.
    pub fn line_mode(text: &str) -> Result<Self> {
        Ok(Cursor { toks: tokenize(text)?, pos: 0, line_mode: true })
    }

    fn skip_newlines(&mut self) {
        if !self.line_mode {
            while self.toks[self.pos].tok == Tok::Newline {
                self.pos += 1;
            }
        }
    }

    pub fn peek(&mut self) -> &Token {
        self.skip_newlines();
        &self.toks[self.pos]
    }

    pub fn next_token(&mut self) -> Token {
        self.skip_newlines();
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    pub fn error<T>(&mut self, message: impl Into<String>) -> Result<T> {
        let t = self.peek().clone();
        Err(Error::Parse { line: t.line, column: t.column, message: message.into() })
    }

    pub fn at_sym(&mut self, sym: &str) -> bool {
        matches!(self.peek().tok, Tok::Sym(s) if s == sym)
    }

    pub fn at_keyword(&mut self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            let found = describe(&self.peek().tok);
            self.error(format!("expected `{sym}`, found {found}"))
        }
    }

    pub fn expect_ident(&mut self) -> Result<(String, usize, usize)> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(s) => {
                self.pos += 1;
                Ok((s, t.line, t.column))
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub fn expect_end(&mut self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            let found = describe(&self.peek().tok);
            self.error(format!("unexpected {found}"))
        }
    }

    /// In line mode: consumes a run of newlines, reporting whether any was seen.
    pub fn eat_newlines(&mut self) -> bool {
        let start = self.pos;
        while self.toks[self.pos].tok == Tok::Newline {
            self.pos += 1;
        }
        self.pos > start
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(x) => format!("`{x}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// `expr := term (('+'|'-') term)*`, `term := factor ('*' factor)*`,
/// `factor := ('-'|'+') factor | atom ('^' 2)?`, `atom := num | ident | '(' expr ')'`.
pub fn parse_expr(cur: &mut Cursor, names: &[String]) -> Result<Polynomial> {
    let mut acc = parse_term(cur, names)?;
    loop {
        if cur.eat_sym("+") {
            acc = acc.add(&parse_term(cur, names)?);
        } else if cur.eat_sym("-") {
            acc = acc.sub(&parse_term(cur, names)?);
        } else {
            return Ok(acc);
        }
    }
}

fn parse_term(cur: &mut Cursor, names: &[String]) -> Result<Polynomial> {
    let mut acc = parse_factor(cur, names)?;
    while cur.eat_sym("*") {
        acc = acc.mul(&parse_factor(cur, names)?);
    }
    Ok(acc)
}

fn parse_factor(cur: &mut Cursor, names: &[String]) -> Result<Polynomial> {
    if cur.eat_sym("-") {
        return Ok(parse_factor(cur, names)?.scale(-1.0));
    }
    if cur.eat_sym("+") {
        return parse_factor(cur, names);
    }
    let n = names.len();
    let t = cur.next_token();
    let base = match t.tok {
        Tok::Num(x) => Polynomial::constant(n, x),
        Tok::Ident(ref s) => match names.iter().position(|v| v == s) {
            Some(i) => Polynomial::var(n, i),
            None => {
                return Err(Error::Parse {
                    line: t.line,
                    column: t.column,
                    message: format!("undeclared variable `{s}`"),
                })
            }
        },
        Tok::Sym("(") => {
            let inner = parse_expr(cur, names)?;
            cur.expect_sym(")")?;
            inner
        }
        other => {
            return Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: format!("expected an expression, found {}", describe(&other)),
            })
        }
    };
    if cur.eat_sym("^") {
        let t = cur.next_token();
        if t.tok != Tok::Num(2.0) {
            return Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: "only `^2` is supported".into(),
            });
        }
        return Ok(base.mul(&base));
    }
    Ok(base)
}

/// Comparison operator of a linear condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

/// `a·v + k REL 0`, normalized from `lhs REL rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCondition {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub rel: Relation,
}

impl LinearCondition {
    /// The condition as `A v <= b` rows (strict relations relaxed).
    pub fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        let neg: Vec<f64> = self.coeffs.iter().map(|a| -a).collect();
        match self.rel {
            Relation::Le | Relation::Lt => vec![(self.coeffs.clone(), -self.constant)],
            Relation::Ge | Relation::Gt => vec![(neg, self.constant)],
            Relation::Eq => vec![(self.coeffs.clone(), -self.constant), (neg, self.constant)],
        }
    }

    /// The closed negation; `None` when it is not convex (`==`).
    pub fn negated(&self) -> Option<LinearCondition> {
        let rel = match self.rel {
            Relation::Le | Relation::Lt => Relation::Ge,
            Relation::Ge | Relation::Gt => Relation::Le,
            Relation::Eq => return None,
        };
        Some(LinearCondition { rel, ..self.clone() })
    }

    /// Exact truth value at a point (strictness respected).
    pub fn holds(&self, point: &[f64]) -> bool {
        let v: f64 = self.coeffs.iter().zip(point).map(|(a, x)| a * x).sum::<f64>() + self.constant;
        match self.rel {
            Relation::Le => v <= 0.0,
            Relation::Lt => v < 0.0,
            Relation::Ge => v >= 0.0,
            Relation::Gt => v > 0.0,
            Relation::Eq => v == 0.0,
        }
    }
}

/// Parses `expr REL expr` where both sides are linear.
pub fn parse_condition(cur: &mut Cursor, names: &[String]) -> Result<LinearCondition> {
    let (line, column) = {
        let t = cur.peek();
        (t.line, t.column)
    };
    let lhs = parse_expr(cur, names)?;
    let rel = if cur.eat_sym("<=") {
        Relation::Le
    } else if cur.eat_sym(">=") {
        Relation::Ge
    } else if cur.eat_sym("==") {
        Relation::Eq
    } else if cur.eat_sym("<") {
        Relation::Lt
    } else if cur.eat_sym(">") {
        Relation::Gt
    } else {
        return cur.error("expected a comparison operator");
    };
    let rhs = parse_expr(cur, names)?;
    let diff = lhs.sub(&rhs);
    if diff.degree() > 1 {
        return Err(Error::Parse { line, column, message: "conditions must be linear".into() });
    }
    let q = diff.to_quad().expect("degree checked");
    Ok(LinearCondition { coeffs: q.linear_coeffs().to_vec(), constant: q.constant_term(), rel })
}

/// Parses `cond ('&&' cond)*`.
pub fn parse_conjunction(cur: &mut Cursor, names: &[String]) -> Result<Vec<LinearCondition>> {
    let mut out = vec![parse_condition(cur, names)?];
    while cur.eat_sym("&&") {
        out.push(parse_condition(cur, names)?);
    }
    Ok(out)
}

/// A single minimization problem read from a problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub vars: Vec<String>,
    pub objective: QuadPoly,
    pub constraints: ConstraintSystem,
}

/// Line-oriented problem format:
///
/// ```text
/// vars x, y
/// minimize x^2 - x
/// subject to
/// x >= 0
/// x + y <= 16
/// ```
///
/// One constraint per line; strict relations are relaxed, `==` gives two rows.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let mut cur = Cursor::line_mode(text)?;
    cur.eat_newlines();
    if !cur.eat_keyword("vars") {
        return cur.error("expected `vars`");
    }
    let mut vars: Vec<String> = Vec::new();
    loop {
        let (name, line, column) = cur.expect_ident()?;
        if vars.contains(&name) {
            return Err(Error::Parse { line, column, message: format!("variable `{name}` declared twice") });
        }
        vars.push(name);
        if !cur.eat_sym(",") {
            break;
        }
    }
    end_line(&mut cur)?;
    if !cur.eat_keyword("minimize") {
        return cur.error("expected `minimize`");
    }
    let (line, column) = {
        let t = cur.peek();
        (t.line, t.column)
    };
    let objective = parse_expr(&mut cur, &vars)?.to_quad_named(Some(&vars)).map_err(|e| Error::Parse {
        line,
        column,
        message: format!("objective has degree {} (monomial {}); at most 2 is supported", e.degree, e.monomial),
    })?;
    end_line(&mut cur)?;
    let mut constraints = ConstraintSystem::new(vars.len());
    if cur.eat_keyword("subject") {
        if !cur.eat_keyword("to") {
            return cur.error("expected `to`");
        }
        end_line(&mut cur)?;
        while !cur.at_end() {
            for (row, b) in parse_condition(&mut cur, &vars)?.rows() {
                constraints.push(row, b)?;
            }
            end_line(&mut cur)?;
        }
    }
    cur.expect_end()?;
    Ok(Problem { vars, objective, constraints })
}

fn end_line(cur: &mut Cursor) -> Result<()> {
    if cur.eat_newlines() || cur.at_end() {
        Ok(())
    } else {
        let found = describe(&cur.peek().tok);
        cur.error(format!("expected end of line, found {found}"))
    }
}
