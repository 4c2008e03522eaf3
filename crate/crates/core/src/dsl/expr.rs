use smallvec::SmallVec;

use super::registry::VarKind;

/// Magnitude bound applied after every arithmetic node. Keeps evaluation
/// total for arbitrary compositions over finite inputs.
pub const SATURATION: f64 = 1e15;

/// Denominator floor used by `div_safe`.
pub const DIV_EPS: f64 = 1e-8;

/// Highest integer exponent accepted by `pow`.
pub const MAX_POW: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Exp,
    Tanh,
    Square,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Exp => "exp",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Square => "square",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Reference to a registry variable, resolved to its frame slot.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub offset: usize,
    pub kind: VarKind,
}

/// A reward expression. Closed over a registry, loop-free and total.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Integer power with a constant exponent in `0..=MAX_POW`.
    Pow(Box<Expr>, u8),
    Norm2(Box<Expr>),
    Dot(Box<Expr>, Box<Expr>),
    Index(Box<Expr>, usize),
    /// Indicator: 1.0 when the comparison holds, else 0.0.
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Clamp(Box<Expr>, Box<Expr>, Box<Expr>),
}

/// Static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Scalar,
    Vector(usize),
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Scalar => f.write_str("scalar"),
            Ty::Vector(n) => write!(f, "vector({n})"),
        }
    }
}

impl From<VarKind> for Ty {
    fn from(k: VarKind) -> Self {
        match k {
            VarKind::Scalar => Ty::Scalar,
            VarKind::Vector(n) => Ty::Vector(n),
        }
    }
}

impl Expr {
    pub fn var(name: &str, offset: usize, kind: VarKind) -> Expr {
        Expr::Var(VarRef {
            name: name.to_string(),
            offset,
            kind,
        })
    }

    /// Mutable references to every numeric literal, in pre-order.
    pub fn constants_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Const(c) => out.push(c),
                Expr::Var(_) => {}
                Expr::Unary(_, a) | Expr::Pow(a, _) | Expr::Norm2(a) | Expr::Index(a, _) => stack.push(a),
                Expr::Binary(_, a, b) | Expr::Dot(a, b) | Expr::Compare(_, a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
                Expr::Clamp(x, lo, hi) => {
                    stack.push(hi);
                    stack.push(lo);
                    stack.push(x);
                }
            }
        }
        out
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Infer the static type, or describe why the expression is ill-typed.
    pub fn type_of(&self) -> Result<Ty, String> {
        use Ty::*;
        Ok(match self {
            Expr::Const(_) => Scalar,
            Expr::Var(v) => v.kind.into(),
            Expr::Unary(UnaryOp::Neg, e) => e.type_of()?,
            Expr::Unary(op, e) => {
                expect_scalar(e.type_of()?, op.name())?;
                Scalar
            }
            Expr::Binary(op, a, b) => {
                let (ta, tb) = (a.type_of()?, b.type_of()?);
                match (op, ta, tb) {
                    (_, Scalar, Scalar) => Scalar,
                    (BinaryOp::Add | BinaryOp::Sub, Vector(m), Vector(n)) if m == n => Vector(m),
                    (BinaryOp::Mul, Scalar, Vector(n)) | (BinaryOp::Mul, Vector(n), Scalar) => {
                        Vector(n)
                    }
                    (BinaryOp::Div, Vector(n), Scalar) => Vector(n),
                    _ => {
                        return Err(format!(
                            "type mismatch: {} of {ta} and {tb}",
                            binary_name(*op)
                        ))
                    }
                }
            }
            Expr::Pow(e, k) => {
                expect_scalar(e.type_of()?, "pow")?;
                if *k > MAX_POW {
                    return Err(format!("pow exponent {k} outside 0..={MAX_POW}"));
                }
                Scalar
            }
            Expr::Norm2(e) => match e.type_of()? {
                Vector(_) => Scalar,
                t => return Err(format!("type mismatch: norm2 expects a vector, got {t}")),
            },
            Expr::Dot(a, b) => match (a.type_of()?, b.type_of()?) {
                (Vector(m), Vector(n)) if m == n => Scalar,
                (ta, tb) => {
                    return Err(format!(
                        "type mismatch: dot expects two vectors of equal dimension, got {ta} and {tb}"
                    ))
                }
            },
            Expr::Index(e, i) => match e.type_of()? {
                Vector(n) if *i < n => Scalar,
                Vector(n) => return Err(format!("index {i} out of range for vector({n})")),
                t => return Err(format!("type mismatch: cannot index a {t}")),
            },
            Expr::Compare(op, a, b) => {
                expect_scalar(a.type_of()?, op.name())?;
                expect_scalar(b.type_of()?, op.name())?;
                Scalar
            }
            Expr::Clamp(x, lo, hi) => {
                for e in [x, lo, hi] {
                    expect_scalar(e.type_of()?, "clamp")?;
                }
                Scalar
            }
        })
    }

    /// Names of all variables referenced, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.contains(&v.name.as_str()) {
                    out.push(v.name.as_str());
                }
            }
        });
        out
    }

    pub fn depth(&self) -> usize {
        1 + self.children().map(Expr::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().map(Expr::node_count).sum::<usize>()
    }

    fn children(&self) -> impl Iterator<Item = &Expr> {
        let v: SmallVec<[&Expr; 3]> = match self {
            Expr::Const(_) | Expr::Var(_) => SmallVec::new(),
            Expr::Unary(_, e) | Expr::Pow(e, _) | Expr::Norm2(e) | Expr::Index(e, _) => {
                smallvec::smallvec![&**e]
            }
            Expr::Binary(_, a, b) | Expr::Dot(a, b) | Expr::Compare(_, a, b) => {
                smallvec::smallvec![&**a, &**b]
            }
            Expr::Clamp(x, lo, hi) => smallvec::smallvec![&**x, &**lo, &**hi],
        };
        v.into_iter()
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Evaluate a scalar-typed expression against a flat frame.
    pub fn eval_scalar(&self, frame: &[f64]) -> f64 {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => frame[v.offset],
            Expr::Unary(op, e) => {
                let x = e.eval_scalar(frame);
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Tanh => x.tanh(),
                    UnaryOp::Square => x * x,
                    UnaryOp::Sqrt => sqrt_safe(x),
                }
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval_scalar(frame), b.eval_scalar(frame));
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => div_safe(x, y),
                    BinaryOp::Min => x.min(y),
                    BinaryOp::Max => x.max(y),
                }
            }
            Expr::Pow(e, k) => e.eval_scalar(frame).powi(i32::from(*k)),
            Expr::Norm2(e) => {
                let v = e.eval_vector(frame);
                v.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            Expr::Dot(a, b) => {
                let (u, v) = (a.eval_vector(frame), b.eval_vector(frame));
                u.iter().zip(&v).map(|(x, y)| x * y).sum()
            }
            Expr::Index(e, i) => e.eval_vector(frame)[*i],
            Expr::Compare(op, a, b) => {
                if op.holds(a.eval_scalar(frame), b.eval_scalar(frame)) {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Clamp(x, lo, hi) => {
                let (x, lo, hi) = (x.eval_scalar(frame), lo.eval_scalar(frame), hi.eval_scalar(frame));
                x.max(lo).min(hi)
            }
        };
        saturate(v)
    }

    /// Shape test for an already type-checked expression.
    fn is_vector(&self) -> bool {
        match self {
            Expr::Var(v) => matches!(v.kind, VarKind::Vector(_)),
            Expr::Unary(UnaryOp::Neg, e) => e.is_vector(),
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub | BinaryOp::Div, a, _) => a.is_vector(),
            Expr::Binary(BinaryOp::Mul, a, b) => a.is_vector() || b.is_vector(),
            _ => false,
        }
    }

    /// Evaluate a vector-typed expression against a flat frame.
    pub fn eval_vector(&self, frame: &[f64]) -> SmallVec<[f64; 4]> {
        match self {
            Expr::Var(v) => frame[v.offset..v.offset + v.kind.width()]
                .iter()
                .map(|&x| saturate(x))
                .collect(),
            Expr::Unary(UnaryOp::Neg, e) => e.eval_vector(frame).into_iter().map(|x| -x).collect(),
            Expr::Binary(op, a, b) => match (op, a.is_vector()) {
                (BinaryOp::Add, _) => zip_with(a.eval_vector(frame), b.eval_vector(frame), |x, y| x + y),
                (BinaryOp::Sub, _) => zip_with(a.eval_vector(frame), b.eval_vector(frame), |x, y| x - y),
                (BinaryOp::Mul, false) => {
                    let s = a.eval_scalar(frame);
                    b.eval_vector(frame).into_iter().map(|x| saturate(s * x)).collect()
                }
                (BinaryOp::Mul, true) => {
                    let s = b.eval_scalar(frame);
                    a.eval_vector(frame).into_iter().map(|x| saturate(x * s)).collect()
                }
                (BinaryOp::Div, _) => {
                    let s = b.eval_scalar(frame);
                    a.eval_vector(frame).into_iter().map(|x| saturate(div_safe(x, s))).collect()
                }
                _ => unreachable!("ill-typed vector expression"),
            },
            _ => unreachable!("ill-typed vector expression"),
        }
    }
}

fn zip_with(
    a: SmallVec<[f64; 4]>,
    b: SmallVec<[f64; 4]>,
    f: impl Fn(f64, f64) -> f64,
) -> SmallVec<[f64; 4]> {
    a.into_iter().zip(b).map(|(x, y)| saturate(f(x, y))).collect()
}

fn expect_scalar(t: Ty, what: &str) -> Result<(), String> {
    match t {
        Ty::Scalar => Ok(()),
        t => Err(format!("type mismatch: {what} expects a scalar, got {t}")),
    }
}

pub(crate) fn binary_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
        BinaryOp::Div => "div",
        BinaryOp::Min => "min",
        BinaryOp::Max => "max",
    }
}

/// `x / max(|y|, 1e-8) * sign(y)`, with `sign(0) = 1`.
pub fn div_safe(x: f64, y: f64) -> f64 {
    let sign = if y < 0.0 { -1.0 } else { 1.0 };
    x / y.abs().max(DIV_EPS) * sign
}

pub fn sqrt_safe(x: f64) -> f64 {
    x.max(0.0).sqrt()
}

#[inline]
pub fn saturate(x: f64) -> f64 {
    x.clamp(-SATURATION, SATURATION)
}
