//! The reward-program language.
//!
//! A program is a list of `name = expr` lines. Each line is one named
//! reward component; the reward is the unweighted sum of the components.
//! Expressions are pure, loop-free and total: division and square root are
//! guarded, `pow` takes a small constant integer exponent, and every node
//! saturates to `±SATURATION`, so finite inputs always give finite outputs.
//!
//! Available forms: numeric literals, registry variables, `+ - * /`,
//! unary minus, `abs exp tanh square sqrt`, `min max`, `pow(x, k)`,
//! `norm2(v)`, `dot(u, v)`, `v[i]`, the indicators `lt le gt ge`, and
//! `clamp(x, lo, hi)`. `#` starts a comment.

mod expr;
mod parse;
mod print;
mod program;
pub mod random;
mod registry;

use std::sync::Arc;

pub use expr::{div_safe, saturate, sqrt_safe, BinaryOp, CmpOp, Expr, Ty, UnaryOp, VarRef, DIV_EPS, MAX_POW, SATURATION};
pub use parse::{parse_expr, ParseError, MAX_DEPTH};
pub use print::expr_to_string;
pub use program::{Component, EvalError, Evaluation, RewardProgram};
pub use registry::{Binding, BindingError, RegistryError, Value, VarEntry, VarKind, VarRegistry};

/// Parse program text against a registry.
pub fn parse_program(source: &str, registry: &Arc<VarRegistry>) -> Result<RewardProgram, ParseError> {
    parse::parse_program(source, registry)
}

/// Evaluate a program on a named binding; returns the total and the
/// per-component values.
pub fn evaluate_program(program: &RewardProgram, binding: &Binding) -> Result<Evaluation, EvalError> {
    program.evaluate(binding)
}

/// Canonical program text.
pub fn serialize_program(program: &RewardProgram) -> String {
    program.serialize()
}

/// Build a program from components, type-checking each one.
pub fn build_program(components: Vec<Component>, registry: &Arc<VarRegistry>) -> Result<RewardProgram, String> {
    if components.is_empty() {
        return Err("program has no components".into());
    }
    for (i, c) in components.iter().enumerate() {
        if components[..i].iter().any(|p| p.name == c.name) {
            return Err(format!("duplicate component name {}", c.name));
        }
        match c.expr.type_of()? {
            Ty::Scalar => {}
            t => return Err(format!("component `{}` must be a scalar, got {t}", c.name)),
        }
    }
    Ok(RewardProgram::from_parts(components, Arc::clone(registry)))
}
