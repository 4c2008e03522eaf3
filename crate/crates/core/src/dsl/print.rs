use std::fmt::Write;

use super::expr::{BinaryOp, Expr, UnaryOp};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 4;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_MUL,
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        // a negative literal prints with a leading minus
        Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

/// Canonical text of an expression, with the minimum parentheses needed
/// to reparse to the same tree.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_child(out: &mut String, e: &Expr, min_prec: u8) {
    if prec(e) < min_prec {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_args(out: &mut String, name: &str, args: &[&Expr]) {
    out.push_str(name);
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
    out.push(')');
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(c) => {
            let _ = write!(out, "{c}");
        }
        Expr::Var(v) => out.push_str(&v.name),
        Expr::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            // `-(2)` keeps a negated literal distinct from the literal `-2`
            if matches!(**inner, Expr::Const(_)) {
                out.push('(');
                write_expr(out, inner);
                out.push(')');
            } else {
                write_child(out, inner, PREC_UNARY);
            }
        }
        Expr::Unary(op, inner) => write_args(out, op.name(), &[inner]),
        Expr::Binary(op @ (BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div), a, b) => {
            let (p, sym) = match op {
                BinaryOp::Add => (PREC_ADD, " + "),
                BinaryOp::Sub => (PREC_ADD, " - "),
                BinaryOp::Mul => (PREC_MUL, " * "),
                _ => (PREC_MUL, " / "),
            };
            write_child(out, a, p);
            out.push_str(sym);
            write_child(out, b, p + 1);
        }
        Expr::Binary(BinaryOp::Min, a, b) => write_args(out, "min", &[a, b]),
        Expr::Binary(BinaryOp::Max, a, b) => write_args(out, "max", &[a, b]),
        Expr::Pow(base, k) => {
            out.push_str("pow(");
            write_expr(out, base);
            let _ = write!(out, ", {k})");
        }
        Expr::Norm2(inner) => write_args(out, "norm2", &[inner]),
        Expr::Dot(a, b) => write_args(out, "dot", &[a, b]),
        Expr::Index(inner, i) => {
            write_child(out, inner, PREC_ATOM);
            let _ = write!(out, "[{i}]");
        }
        Expr::Compare(op, a, b) => write_args(out, op.name(), &[a, b]),
        Expr::Clamp(x, lo, hi) => write_args(out, "clamp", &[x, lo, hi]),
    }
}
