//! Two-stage templated baseline.
//!
//! Stage one picks statements from an environment's template ("keep the
//! pole angle close to zero"); stage two binds each statement to a reward
//! primitive with a weight. The program has one component per primitive.

use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::llm::{ChatMessage, ChatRequest, ChatTransport, LlmSettings, TransportError};
use super::{Generator, GeneratorContext, GeneratorError, ProposalRequest};
use crate::dsl::{Binding, Value, VarRegistry};
use crate::env::EnvId;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// `-‖a − b‖`
    MinDist,
    /// `‖a − b‖`
    MaxDist,
    /// `1 / (1 + ‖a − b‖)`
    InvDist,
    /// `exp(−‖a − b‖²)`
    ExpSqDiff,
    /// `−|a − b|`
    AbsDiff,
    /// Constant 1 for every step survived.
    DurationStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Var(String),
    Const(Vec<f64>),
}

impl Operand {
    fn values(&self, binding: &Binding) -> Result<Vec<f64>, String> {
        match self {
            Operand::Const(v) => Ok(v.clone()),
            Operand::Var(name) => binding
                .get(name)
                .map(|v| v.as_slice().to_vec())
                .ok_or_else(|| format!("missing binding for {name}")),
        }
    }

    fn text(&self) -> String {
        match self {
            Operand::Var(n) => n.clone(),
            Operand::Const(v) if v.len() == 1 => fmt_num(v[0]),
            // vector constants are not literals in the language; only zero
            // vectors are used, and those are dropped by `difference`
            Operand::Const(_) => unreachable!("vector constants are rendered through difference()"),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Operand::Const(v) if v.iter().all(|x| *x == 0.0))
    }
}

fn fmt_num(x: f64) -> String {
    if x < 0.0 {
        format!("({x})")
    } else {
        format!("{x}")
    }
}

/// A bound reward primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2rPrimitive {
    pub name: String,
    pub kind: PrimitiveKind,
    pub a: Option<Operand>,
    pub b: Option<Operand>,
    pub scale: f64,
}

fn norm(d: &[f64]) -> f64 {
    d.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl L2rPrimitive {
    /// Direct numeric value of the primitive on a binding.
    pub fn value(&self, binding: &Binding) -> Result<f64, String> {
        if self.kind == PrimitiveKind::DurationStyle {
            return Ok(self.scale);
        }
        let (a, b) = match (&self.a, &self.b) {
            (Some(a), Some(b)) => (a.values(binding)?, b.values(binding)?),
            _ => return Err(format!("primitive {} needs two operands", self.name)),
        };
        if a.len() != b.len() {
            return Err(format!("primitive {} compares values of different widths", self.name));
        }
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let raw = match self.kind {
            PrimitiveKind::MinDist => -norm(&d),
            PrimitiveKind::MaxDist => norm(&d),
            PrimitiveKind::InvDist => 1.0 / (1.0 + norm(&d)),
            PrimitiveKind::ExpSqDiff => (-d.iter().map(|x| x * x).sum::<f64>()).exp(),
            PrimitiveKind::AbsDiff => -norm(&d),
            PrimitiveKind::DurationStyle => unreachable!(),
        };
        Ok(self.scale * raw)
    }

    fn difference(&self, width: usize) -> String {
        let a = self.a.as_ref().expect("operand");
        let b = self.b.as_ref().expect("operand");
        match (a.is_zero(), b.is_zero()) {
            (_, true) => a.text(),
            (true, false) => format!("-{}", b.text()),
            _ if width == 1 || !matches!((a, b), (Operand::Const(_), _) | (_, Operand::Const(_))) => {
                format!("{} - {}", a.text(), b.text())
            }
            _ => unreachable!("vector constants must be zero"),
        }
    }

    /// Program expression for the primitive; `width` is the operand width.
    pub fn expr_text(&self, width: usize) -> String {
        let body = match self.kind {
            PrimitiveKind::DurationStyle => return fmt_scale(self.scale, None),
            _ => {
                let d = self.difference(width);
                let magnitude = if width == 1 { format!("abs({d})") } else { format!("norm2({d})") };
                let sq = if width == 1 { format!("square({d})") } else { format!("dot({d}, {d})") };
                match self.kind {
                    PrimitiveKind::MinDist | PrimitiveKind::AbsDiff => format!("-{magnitude}"),
                    PrimitiveKind::MaxDist => magnitude,
                    PrimitiveKind::InvDist => format!("1 / (1 + {magnitude})"),
                    PrimitiveKind::ExpSqDiff => format!("exp(-{sq})"),
                    PrimitiveKind::DurationStyle => unreachable!(),
                }
            }
        };
        fmt_scale(self.scale, Some(body))
    }
}

fn fmt_scale(scale: f64, body: Option<String>) -> String {
    match body {
        None => format!("{scale}"),
        Some(b) if scale == 1.0 => b,
        Some(b) => format!("{scale} * ({b})"),
    }
}

/// A template statement and the primitive it binds to.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub text: String,
    pub name: String,
    pub kind: PrimitiveKind,
    pub a: Option<Operand>,
    pub b: Option<Operand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2rTemplate {
    pub statements: Vec<Statement>,
}

fn stmt(text: &str, name: &str, kind: PrimitiveKind, a: Option<Operand>, b: Option<Operand>) -> Statement {
    Statement {
        text: text.into(),
        name: name.into(),
        kind,
        a,
        b,
    }
}

fn var(n: &str) -> Option<Operand> {
    Some(Operand::Var(n.into()))
}

fn zero(width: usize) -> Option<Operand> {
    Some(Operand::Const(vec![0.0; width]))
}

pub const WEIGHTS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

impl L2rTemplate {
    pub fn for_env(id: EnvId) -> Self {
        use PrimitiveKind::*;
        let statements = match id {
            EnvId::Cartpole => vec![
                stmt("keep pole_angle close to 0", "angle_exp", ExpSqDiff, var("pole_angle"), zero(1)),
                stmt("set the distance between pole_angle and 0 to be minimal", "angle_abs", AbsDiff, var("pole_angle"), zero(1)),
                stmt("keep cart_pos close to 0", "cart_exp", ExpSqDiff, var("cart_pos"), zero(1)),
                stmt("set the distance between cart_pos and 0 to be minimal", "cart_abs", AbsDiff, var("cart_pos"), zero(1)),
                stmt("set the distance between pole_vel and 0 to be minimal", "pole_vel_abs", AbsDiff, var("pole_vel"), zero(1)),
                stmt("set the distance between cart_vel and 0 to be minimal", "cart_vel_abs", AbsDiff, var("cart_vel"), zero(1)),
                stmt("keep the pole up for as long as possible", "alive", DurationStyle, None, None),
            ],
            _ => vec![
                stmt("set the distance between pos and target to be minimal", "reach_min", MinDist, var("pos"), var("target")),
                stmt("set pos close to target", "reach_inv", InvDist, var("pos"), var("target")),
                stmt("keep pos close to target", "reach_exp", ExpSqDiff, var("pos"), var("target")),
                stmt("keep dist close to 0", "dist_abs", AbsDiff, var("dist"), zero(1)),
                stmt("set the distance between vel and 0 to be minimal", "still_min", MinDist, var("vel"), zero(2)),
                stmt("set the distance between pos and 0 to be maximal", "spread_max", MaxDist, var("pos"), zero(2)),
                stmt("keep the episode going for as long as possible", "alive", DurationStyle, None, None),
            ],
        };
        Self { statements }
    }

    /// Check every statement against a registry.
    pub fn validate(&self, registry: &VarRegistry) -> Result<(), String> {
        for s in &self.statements {
            let mut widths = Vec::new();
            for op in [&s.a, &s.b].into_iter().flatten() {
                match op {
                    Operand::Var(n) => match registry.lookup(n) {
                        Some((_, e)) => widths.push(e.kind.width()),
                        None => return Err(format!("statement `{}` refers to unknown variable {n}", s.text)),
                    },
                    Operand::Const(v) => widths.push(v.len()),
                }
            }
            if widths.windows(2).any(|w| w[0] != w[1]) {
                return Err(format!("statement `{}` compares values of different widths", s.text));
            }
        }
        Ok(())
    }

    /// Render the statement list shown to a selecting model.
    pub fn describe(&self) -> String {
        self.statements
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}\n", i + 1, s.text))
            .collect()
    }

    fn width(&self, s: &Statement, registry: &VarRegistry) -> usize {
        match &s.a {
            Some(Operand::Var(n)) => registry.lookup(n).map_or(1, |(_, e)| e.kind.width()),
            Some(Operand::Const(v)) => v.len(),
            None => 1,
        }
    }

    /// Bind selected statements (index, weight) to primitives.
    pub fn bind(&self, selection: &[(usize, f64)]) -> Vec<L2rPrimitive> {
        let mut out: Vec<L2rPrimitive> = Vec::new();
        for &(i, scale) in selection {
            let s = &self.statements[i];
            if out.iter().any(|p| p.name == s.name) {
                continue;
            }
            out.push(L2rPrimitive {
                name: s.name.clone(),
                kind: s.kind,
                a: s.a.clone(),
                b: s.b.clone(),
                scale,
            });
        }
        out
    }

    /// Program text summing the primitives, one component each.
    pub fn program_text(&self, primitives: &[L2rPrimitive], registry: &VarRegistry) -> String {
        primitives
            .iter()
            .map(|p| {
                let s = self.statements.iter().find(|s| s.name == p.name).expect("bound from this template");
                format!("{} = {}\n", p.name, p.expr_text(self.width(s, registry)))
            })
            .collect()
    }
}

/// How statements are chosen in stage one.
pub enum Selector {
    Seeded(u64),
    Chat(Box<dyn ChatTransport>, LlmSettings),
}

pub struct L2rGenerator {
    selector: Selector,
}

impl L2rGenerator {
    pub fn seeded(seed: u64) -> Self {
        Self {
            selector: Selector::Seeded(seed),
        }
    }

    pub fn with_chat(transport: Box<dyn ChatTransport>, settings: LlmSettings) -> Self {
        Self {
            selector: Selector::Chat(transport, settings),
        }
    }
}

/// Parse a selection reply: one line per statement, number then optional weight.
pub fn parse_selection(reply: &str, count: usize) -> Vec<(usize, f64)> {
    reply
        .lines()
        .filter_map(|line| {
            let mut nums = line
                .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
                .filter(|t| !t.is_empty())
                .filter_map(|t| t.parse::<f64>().ok());
            let idx = nums.next()?;
            if idx.fract() != 0.0 || idx < 1.0 || idx as usize > count {
                return None;
            }
            let w = nums.next().filter(|w| w.is_finite() && *w > 0.0).unwrap_or(1.0);
            Some((idx as usize - 1, w))
        })
        .collect()
}

/// `k` templated programs for the context's environment.
pub fn l2r_generate(ctx: &GeneratorContext, k: usize, seed: u64) -> Result<Vec<String>, GeneratorError> {
    L2rGenerator::seeded(seed).generate(ctx, k, 1.0)
}

impl L2rGenerator {
    fn generate(&self, ctx: &GeneratorContext, k: usize, temperature: f64) -> Result<Vec<String>, GeneratorError> {
        let template = L2rTemplate::for_env(ctx.env_id);
        template.validate(&ctx.registry).map_err(GeneratorError::Invalid)?;
        let n = template.statements.len();
        let selections: Vec<Vec<(usize, f64)>> = match &self.selector {
            Selector::Seeded(seed) => {
                let mut rng = rng::stream(*seed, &[ctx.restart as u64, ctx.iteration as u64, 0x12]);
                (0..k)
                    .map(|_| {
                        let m = rng.random_range(1..=3.min(n));
                        sample(&mut rng, n, m)
                            .into_iter()
                            .map(|i| (i, *WEIGHTS.choose(&mut rng).expect("nonempty")))
                            .collect()
                    })
                    .collect()
            }
            Selector::Chat(transport, settings) => {
                let request = ChatRequest {
                    model: settings.model.clone(),
                    messages: vec![
                        ChatMessage::system(
                            "You describe the motion an agent should perform by picking statements from a list.",
                        ),
                        ChatMessage::user(format!(
                            "{}\nTask description: {}\n\nStatements:\n{}\nReply with one line per chosen statement: \
                             its number, optionally followed by a positive weight.",
                            ctx.env_context,
                            ctx.task_description,
                            template.describe()
                        )),
                    ],
                    temperature,
                    n: k,
                };
                let replies = transport.complete(&request).map_err(|e| GeneratorError::Transport {
                    attempts: 1,
                    message: match e {
                        TransportError::Transient(m) | TransportError::Fatal(m) => m,
                    },
                })?;
                if replies.len() < k {
                    return Err(GeneratorError::Transport {
                        attempts: 1,
                        message: format!("expected {k} replies, got {}", replies.len()),
                    });
                }
                replies.iter().take(k).map(|r| parse_selection(r, n)).collect()
            }
        };
        Ok(selections
            .into_iter()
            .map(|sel| {
                let sel = if sel.is_empty() { vec![(0, 1.0)] } else { sel };
                template.program_text(&template.bind(&sel), &ctx.registry)
            })
            .collect())
    }
}

impl Generator for L2rGenerator {
    fn kind(&self) -> &'static str {
        "l2r"
    }

    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError> {
        self.generate(request.ctx, request.k, request.temperature)
    }

    fn is_deterministic(&self) -> bool {
        matches!(self.selector, Selector::Seeded(_))
    }
}

/// Binding helper for primitive tests and demos.
pub fn binding_of(pairs: &[(&str, Value)]) -> Binding {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}
