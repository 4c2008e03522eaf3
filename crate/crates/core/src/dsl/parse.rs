//! Recursive-descent parser for reward program text.
//!
//! ```text
//! program   := { line }
//! line      := [ ident "=" expr ] [ "#" comment ] newline
//! expr      := term { ("+" | "-") term }
//! term      := unary { ("*" | "/") unary }
//! unary     := "-" unary | postfix
//! postfix   := primary { "[" int "]" }
//! primary   := number | ident | ident "(" args ")" | "(" expr ")"
//! ```
//!
//! A unary minus applied directly to a numeric literal folds into a
//! negative constant, so `-2 * x` is `Const(-2) * x`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::expr::{BinaryOp, CmpOp, Expr, Ty, UnaryOp, MAX_POW};
use super::program::{Component, RewardProgram};
use super::registry::{is_identifier, VarRegistry};

/// Expressions nested deeper than this are rejected.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i + 1;
        if c == '#' {
            break;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &line[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                line: lineno,
                column: col,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ParseError {
                    line: lineno,
                    column: col,
                    message: format!("number `{text}` is out of range"),
                });
            }
            out.push(Token { tok: Tok::Num(value), col });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(line[start..i].to_string()),
                col,
            });
        } else if "=+-*/()[],".contains(c) {
            out.push(Token { tok: Tok::Sym(c), col });
            i += 1;
        } else {
            let ch = line[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                line: lineno,
                column: col,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    line: usize,
    end_col: usize,
    registry: &'a VarRegistry,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.err(self.col(), format!("expected `{c}`{}", self.found())))
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => ", found end of line".to_string(),
            Some(Tok::Num(x)) => format!(", found `{x}`"),
            Some(Tok::Ident(s)) => format!(", found `{s}`"),
            Some(Tok::Sym(c)) => format!(", found `{c}`"),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(self.col(), format!("expression nested deeper than {MAX_DEPTH}")));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<(Expr, usize), ParseError> {
        self.enter()?;
        let (mut lhs, col) = self.term()?;
        loop {
            let op = if self.eat_sym('+') {
                BinaryOp::Add
            } else if self.eat_sym('-') {
                BinaryOp::Sub
            } else {
                break;
            };
            let (rhs, _) = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok((lhs, col))
    }

    fn term(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut lhs, col) = self.unary()?;
        loop {
            let op = if self.eat_sym('*') {
                BinaryOp::Mul
            } else if self.eat_sym('/') {
                BinaryOp::Div
            } else {
                break;
            };
            let (rhs, _) = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok((lhs, col))
    }

    fn unary(&mut self) -> Result<(Expr, usize), ParseError> {
        let col = self.col();
        if self.eat_sym('-') {
            self.enter()?;
            // fold `-<literal>` into a negative constant unless it is indexed
            let folded = match (self.peek(), self.toks.get(self.pos + 1).map(|t| &t.tok)) {
                (Some(Tok::Num(x)), next) if next != Some(&Tok::Sym('[')) => Some(-*x),
                _ => None,
            };
            let e = if let Some(c) = folded {
                self.pos += 1;
                Expr::Const(c)
            } else {
                Expr::unary(UnaryOp::Neg, self.unary()?.0)
            };
            self.depth -= 1;
            Ok((e, col))
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut e, col) = self.primary()?;
        while self.eat_sym('[') {
            let icol = self.col();
            let index = match self.peek() {
                Some(Tok::Num(x)) if x.fract() == 0.0 && *x >= 0.0 => *x as usize,
                _ => return Err(self.err(icol, format!("expected a non-negative integer index{}", self.found()))),
            };
            self.pos += 1;
            self.expect_sym(']')?;
            e = Expr::Index(Box::new(e), index);
            self.check(&e, col)?;
        }
        Ok((e, col))
    }

    fn primary(&mut self) -> Result<(Expr, usize), ParseError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok((Expr::Const(x), col))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let (e, _) = self.expr()?;
                self.expect_sym(')')?;
                Ok((e, col))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat_sym('(') {
                    let e = self.call(&name, col)?;
                    Ok((e, col))
                } else {
                    let (offset, entry) = self
                        .registry
                        .lookup(&name)
                        .ok_or_else(|| self.err(col, format!("unknown variable {name}")))?;
                    Ok((Expr::var(&name, offset, entry.kind), col))
                }
            }
            _ => Err(self.err(col, format!("expected an expression{}", self.found()))),
        }
    }

    fn call(&mut self, name: &str, col: usize) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut args = Vec::new();
        if !self.eat_sym(')') {
            loop {
                args.push(self.expr()?);
                if self.eat_sym(')') {
                    break;
                }
                self.expect_sym(',')?;
            }
        }
        self.depth -= 1;
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(ParseError {
                    line: self.line,
                    column: col,
                    message: format!("{name} takes {n} argument(s), got {}", args.len()),
                })
            }
        };
        let unary = |op| -> Result<UnaryOp, ParseError> { arity(1).map(|_| op) };
        let mut it = args.iter().map(|(e, _)| Box::new(e.clone()));
        let mut next = || it.next().expect("arity checked");
        let e = match name {
            "abs" => Expr::Unary(unary(UnaryOp::Abs)?, next()),
            "exp" => Expr::Unary(unary(UnaryOp::Exp)?, next()),
            "tanh" => Expr::Unary(unary(UnaryOp::Tanh)?, next()),
            "square" => Expr::Unary(unary(UnaryOp::Square)?, next()),
            "sqrt" => Expr::Unary(unary(UnaryOp::Sqrt)?, next()),
            "norm2" => {
                arity(1)?;
                Expr::Norm2(next())
            }
            "dot" | "min" | "max" | "lt" | "le" | "gt" | "ge" => {
                arity(2)?;
                let (a, b) = (next(), next());
                match name {
                    "dot" => Expr::Dot(a, b),
                    "min" => Expr::Binary(BinaryOp::Min, a, b),
                    "max" => Expr::Binary(BinaryOp::Max, a, b),
                    "lt" => Expr::Compare(CmpOp::Lt, a, b),
                    "le" => Expr::Compare(CmpOp::Le, a, b),
                    "gt" => Expr::Compare(CmpOp::Gt, a, b),
                    _ => Expr::Compare(CmpOp::Ge, a, b),
                }
            }
            "clamp" => {
                arity(3)?;
                Expr::Clamp(next(), next(), next())
            }
            "pow" => {
                arity(2)?;
                let base = next();
                let k = match &args[1].0 {
                    Expr::Const(k) if k.fract() == 0.0 && (0.0..=f64::from(MAX_POW)).contains(k) => *k as u8,
                    _ => {
                        return Err(ParseError {
                            line: self.line,
                            column: args[1].1,
                            message: format!("pow exponent must be an integer constant in 0..={MAX_POW}"),
                        })
                    }
                };
                Expr::Pow(base, k)
            }
            _ => return Err(self.err(col, format!("unknown function {name}"))),
        };
        self.check(&e, col)?;
        Ok(e)
    }

    fn check(&self, e: &Expr, col: usize) -> Result<(), ParseError> {
        e.type_of().map(|_| ()).map_err(|m| self.err(col, m))
    }
}

/// Parse a single expression (no `name =` prefix) against a registry.
pub fn parse_expr(source: &str, registry: &VarRegistry) -> Result<Expr, ParseError> {
    let toks = lex_line(source, 1)?;
    let mut p = Parser {
        toks,
        pos: 0,
        line: 1,
        end_col: source.len() + 1,
        registry,
        depth: 0,
    };
    let (e, col) = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err(p.col(), format!("unexpected trailing input{}", p.found())));
    }
    p.check(&e, col)?;
    Ok(e)
}

/// Parse program text: one `name = expr` component per line.
pub fn parse_program(source: &str, registry: &Arc<VarRegistry>) -> Result<RewardProgram, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError {
            line: 1,
            column: 1,
            message: "empty program".into(),
        });
    }
    let mut components: Vec<Component> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex_line(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = Parser {
            toks,
            pos: 0,
            line: lineno,
            end_col: line.len() + 1,
            registry,
            depth: 0,
        };
        let name_col = p.col();
        let name = match p.peek() {
            Some(Tok::Ident(n)) if is_identifier(n) => n.clone(),
            _ => return Err(p.err(name_col, format!("expected a component name{}", p.found()))),
        };
        p.pos += 1;
        p.expect_sym('=')?;
        let (expr, col) = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err(p.col(), format!("unexpected trailing input{}", p.found())));
        }
        match expr.type_of() {
            Ok(Ty::Scalar) => {}
            Ok(t) => {
                return Err(p.err(col, format!("type mismatch: component `{name}` must be a scalar, got {t}")))
            }
            Err(m) => return Err(p.err(col, m)),
        }
        if components.iter().any(|c| c.name == name) {
            return Err(p.err(name_col, format!("duplicate component name {name}")));
        }
        components.push(Component { name, expr });
    }
    if components.is_empty() {
        return Err(ParseError {
            line: 1,
            column: 1,
            message: "program has no components".into(),
        });
    }
    Ok(RewardProgram::from_parts(components, Arc::clone(registry)))
}
