//! Seeded sampler of well-typed random expressions over a registry.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::expr::{BinaryOp, CmpOp, Expr, UnaryOp, MAX_POW};
use super::program::{Component, RewardProgram};
use super::registry::{VarKind, VarRegistry};

const UNARY: [UnaryOp; 6] = [
    UnaryOp::Neg,
    UnaryOp::Abs,
    UnaryOp::Exp,
    UnaryOp::Tanh,
    UnaryOp::Square,
    UnaryOp::Sqrt,
];
const BINARY: [BinaryOp; 6] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Min,
    BinaryOp::Max,
];
const CMP: [CmpOp; 4] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

/// Random constant drawn from a mix of round and arbitrary values.
pub fn random_constant<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => f64::from(rng.random_range(-5i32..=5)),
        1 => f64::from(rng.random_range(1i32..=20)) / 10.0,
        2 => rng.random_range(-10.0..10.0),
        _ => rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-3..=3)),
    }
}

/// Sample a scalar expression of depth at most `max_depth`.
pub fn random_scalar<R: Rng + ?Sized>(rng: &mut R, registry: &VarRegistry, max_depth: usize) -> Expr {
    let scalars: Vec<_> = vars_of(registry, |k| k == VarKind::Scalar);
    let has_vectors = registry.entries().iter().any(|e| matches!(e.kind, VarKind::Vector(_)));
    if max_depth <= 1 {
        return match scalars.choose(rng) {
            Some(v) if rng.random_bool(0.6) => v.clone(),
            _ => Expr::Const(random_constant(rng)),
        };
    }
    let d = max_depth - 1;
    match rng.random_range(0..10) {
        0 => Expr::Const(random_constant(rng)),
        1 => random_scalar(rng, registry, 1),
        2 => Expr::unary(*UNARY.choose(rng).unwrap(), random_scalar(rng, registry, d)),
        3 | 4 => Expr::binary(
            *BINARY.choose(rng).unwrap(),
            random_scalar(rng, registry, d),
            random_scalar(rng, registry, d),
        ),
        5 => Expr::Pow(Box::new(random_scalar(rng, registry, d)), rng.random_range(0..=MAX_POW)),
        6 => Expr::Compare(
            *CMP.choose(rng).unwrap(),
            Box::new(random_scalar(rng, registry, d)),
            Box::new(random_scalar(rng, registry, d)),
        ),
        7 => Expr::Clamp(
            Box::new(random_scalar(rng, registry, d)),
            Box::new(random_scalar(rng, registry, d)),
            Box::new(random_scalar(rng, registry, d)),
        ),
        _ if has_vectors => {
            let dim = pick_dim(rng, registry);
            match rng.random_range(0..3) {
                0 => Expr::Norm2(Box::new(random_vector(rng, registry, dim, d))),
                1 => Expr::Dot(
                    Box::new(random_vector(rng, registry, dim, d)),
                    Box::new(random_vector(rng, registry, dim, d)),
                ),
                _ => Expr::Index(Box::new(random_vector(rng, registry, dim, d)), rng.random_range(0..dim)),
            }
        }
        _ => random_scalar(rng, registry, 1),
    }
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R, registry: &VarRegistry, dim: usize, max_depth: usize) -> Expr {
    let vars = vars_of(registry, |k| k == VarKind::Vector(dim));
    let leaf = vars.choose(rng).expect("dimension drawn from registry").clone();
    if max_depth <= 1 {
        return leaf;
    }
    let d = max_depth - 1;
    match rng.random_range(0..6) {
        0 | 1 => leaf,
        2 => Expr::unary(UnaryOp::Neg, random_vector(rng, registry, dim, d)),
        3 => Expr::binary(
            if rng.random_bool(0.5) { BinaryOp::Add } else { BinaryOp::Sub },
            random_vector(rng, registry, dim, d),
            random_vector(rng, registry, dim, d),
        ),
        4 => {
            let (s, v) = (random_scalar(rng, registry, d), random_vector(rng, registry, dim, d));
            if rng.random_bool(0.5) {
                Expr::binary(BinaryOp::Mul, s, v)
            } else {
                Expr::binary(BinaryOp::Mul, v, s)
            }
        }
        _ => Expr::binary(
            BinaryOp::Div,
            random_vector(rng, registry, dim, d),
            random_scalar(rng, registry, d),
        ),
    }
}

fn pick_dim<R: Rng + ?Sized>(rng: &mut R, registry: &VarRegistry) -> usize {
    let dims: Vec<usize> = registry
        .entries()
        .iter()
        .filter_map(|e| match e.kind {
            VarKind::Vector(n) => Some(n),
            VarKind::Scalar => None,
        })
        .collect();
    *dims.choose(rng).expect("registry has vectors")
}

fn vars_of(registry: &VarRegistry, keep: impl Fn(VarKind) -> bool) -> Vec<Expr> {
    registry
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| keep(e.kind))
        .map(|(i, e)| Expr::var(&e.name, registry.offset_of(i), e.kind))
        .collect()
}

/// Sample a program with `1..=max_components` random components.
pub fn random_program<R: Rng + ?Sized>(
    rng: &mut R,
    registry: &Arc<VarRegistry>,
    max_components: usize,
    max_depth: usize,
) -> RewardProgram {
    let n = rng.random_range(1..=max_components.max(1));
    let components = (0..n)
        .map(|i| Component {
            name: format!("c{i}_r"),
            expr: random_scalar(rng, registry, max_depth),
        })
        .collect();
    RewardProgram::from_parts(components, Arc::clone(registry))
}
