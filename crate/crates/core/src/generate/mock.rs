//! Seeded offline generator.
//!
//! First-round samples are built from registry idioms: 60% distance
//! shaping, 20% action penalties, 20% random expressions, with an
//! occasional malformed sample. Later rounds mutate the carried program.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{text_hash, Generator, GeneratorContext, GeneratorError, ProposalRequest};
use crate::dsl::{expr_to_string, parse_program, random::random_scalar, VarKind, VarRegistry};
use crate::rng::{self, StreamRng};

/// Probability that a sample references a variable that does not exist.
const MALFORMED_RATE: f64 = 0.04;
/// Probability that a later-round sample ignores the carried program.
const FRESH_RATE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Samples are a pure function of the seed, the round and the carried text.
    pub fn sample(&self, ctx: &GeneratorContext, k: usize) -> Vec<String> {
        let prior_key = ctx
            .prior
            .as_ref()
            .map_or(0, |p| text_hash(&p.program_text));
        let mut rng = rng::stream(self.seed, &[ctx.restart as u64, ctx.iteration as u64, prior_key]);
        let vocab = Vocabulary::new(&ctx.registry);
        (0..k)
            .map(|_| {
                if rng.random_bool(MALFORMED_RATE) {
                    return malformed(&mut rng, &vocab);
                }
                match &ctx.prior {
                    Some(prior) if !rng.random_bool(FRESH_RATE) => mutate(&mut rng, &vocab, &ctx.registry, &prior.program_text),
                    _ => fresh(&mut rng, &vocab, &ctx.registry),
                }
            })
            .collect()
    }
}

impl Generator for MockGenerator {
    fn kind(&self) -> &'static str {
        "mock"
    }

    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError> {
        Ok(self.sample(request.ctx, request.k))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Registry variables grouped by role.
struct Vocabulary {
    /// Scalars measured in metres or radians: distances, angles, offsets.
    spatial_scalars: Vec<String>,
    /// Pairs of same-width position vectors.
    vector_pairs: Vec<(String, String)>,
    /// Velocity-like variables (scalar or vector).
    rates: Vec<(String, VarKind)>,
    action: Option<(String, VarKind)>,
    progress: Option<(String, String)>,
}

impl Vocabulary {
    fn new(registry: &VarRegistry) -> Self {
        let entries = registry.entries();
        let spatial_scalars = entries
            .iter()
            .filter(|e| e.kind == VarKind::Scalar && (e.units == "m" || e.units == "rad") && e.name != "prev_dist")
            .map(|e| e.name.clone())
            .collect();
        let positions: Vec<_> = entries
            .iter()
            .filter(|e| matches!(e.kind, VarKind::Vector(_)) && e.units == "m")
            .collect();
        let mut vector_pairs = Vec::new();
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                if a.kind == b.kind {
                    vector_pairs.push((a.name.clone(), b.name.clone()));
                }
            }
        }
        let rates = entries
            .iter()
            .filter(|e| e.units.contains("/s"))
            .map(|e| (e.name.clone(), e.kind))
            .collect();
        let action = entries
            .iter()
            .find(|e| e.name == "action")
            .map(|e| (e.name.clone(), e.kind));
        let progress = (registry.lookup("dist").is_some() && registry.lookup("prev_dist").is_some())
            .then(|| ("prev_dist".to_string(), "dist".to_string()));
        Self {
            spatial_scalars,
            vector_pairs,
            rates,
            action,
            progress,
        }
    }
}

/// A short, readable positive constant.
fn weight(rng: &mut StreamRng) -> f64 {
    let x: f64 = 10f64.powf(rng.random_range(-1.5..1.0));
    round_sig(x, 2)
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn magnitude(name: &str, kind: VarKind) -> String {
    match kind {
        VarKind::Scalar => format!("abs({name})"),
        VarKind::Vector(_) => format!("norm2({name})"),
    }
}

fn distance_idiom(rng: &mut StreamRng, v: &Vocabulary) -> Option<(String, String)> {
    let mut options: Vec<(String, String)> = Vec::new();
    let w = weight(rng);
    for s in &v.spatial_scalars {
        let t = round_sig(rng.random_range(0.02..0.3), 2);
        options.push((format!("{s}_r"), format!("-{w} * abs({s})")));
        options.push((format!("{s}_sq"), format!("-{w} * square({s})")));
        options.push((format!("{s}_exp"), format!("exp(-{w} * abs({s}))")));
        options.push((format!("{s}_near"), format!("{w} * lt(abs({s}), {t})")));
    }
    for (a, b) in &v.vector_pairs {
        options.push((format!("{b}_r"), format!("-{w} * norm2({a} - {b})")));
        options.push((format!("{b}_exp"), format!("exp(-{w} * norm2({a} - {b}))")));
    }
    if let Some((prev, cur)) = &v.progress {
        options.push(("progress_r".into(), format!("{} * ({prev} - {cur})", round_sig(w * 10.0, 2))));
    }
    options.choose(rng).cloned()
}

fn action_idiom(rng: &mut StreamRng, v: &Vocabulary) -> Option<(String, String)> {
    let w = round_sig(weight(rng) * 0.1, 2);
    let mut options = Vec::new();
    if let Some((a, kind)) = &v.action {
        options.push(("action_pen".to_string(), format!("-{w} * {}", squared(a, *kind))));
        options.push(("action_pen".to_string(), format!("-{w} * {}", magnitude(a, *kind))));
    }
    for (r, kind) in &v.rates {
        options.push((format!("{r}_pen"), format!("-{w} * {}", magnitude(r, *kind))));
    }
    options.choose(rng).cloned()
}

fn squared(name: &str, kind: VarKind) -> String {
    match kind {
        VarKind::Scalar => format!("square({name})"),
        VarKind::Vector(_) => format!("dot({name}, {name})"),
    }
}

fn random_idiom(rng: &mut StreamRng, registry: &VarRegistry) -> (String, String) {
    if rng.random_bool(0.25) {
        return ("alive".into(), format!("{}", weight(rng)));
    }
    let e = random_scalar(rng, registry, 3);
    ("extra_r".into(), expr_to_string(&e))
}

fn component(rng: &mut StreamRng, v: &Vocabulary, registry: &VarRegistry) -> (String, String) {
    let roll: f64 = rng.random();
    let picked = if roll < 0.6 {
        distance_idiom(rng, v)
    } else if roll < 0.8 {
        action_idiom(rng, v)
    } else {
        None
    };
    picked.unwrap_or_else(|| random_idiom(rng, registry))
}

fn render(components: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut used: Vec<String> = Vec::new();
    for (name, expr) in components {
        let mut unique = name.clone();
        let mut n = 2;
        while used.contains(&unique) {
            unique = format!("{name}_{n}");
            n += 1;
        }
        out.push_str(&format!("{unique} = {expr}\n"));
        used.push(unique);
    }
    out
}

fn fresh(rng: &mut StreamRng, v: &Vocabulary, registry: &VarRegistry) -> String {
    let n = rng.random_range(1..=3);
    let parts: Vec<_> = (0..n).map(|_| component(rng, v, registry)).collect();
    render(&parts)
}

fn malformed(rng: &mut StreamRng, v: &Vocabulary) -> String {
    let base = v.spatial_scalars.choose(rng).cloned().unwrap_or_else(|| "state".into());
    format!("dist_r = -{} * {base}_to_goal\n", weight(rng))
}

fn mutate(rng: &mut StreamRng, v: &Vocabulary, registry: &std::sync::Arc<VarRegistry>, prior: &str) -> String {
    let Ok(program) = parse_program(prior, registry) else {
        return fresh(rng, v, registry);
    };
    let mut parts: Vec<(String, crate::dsl::Expr)> = program
        .components()
        .iter()
        .map(|c| (c.name.clone(), c.expr.clone()))
        .collect();
    let mut added: Vec<(String, String)> = Vec::new();
    let edits = if rng.random_bool(0.3) { 2 } else { 1 };
    for _ in 0..edits {
        let roll: f64 = rng.random();
        // an earlier edit may have removed the only component
        if roll < 0.45 && !parts.is_empty() {
            let i = rng.random_range(0..parts.len());
            let mut consts = parts[i].1.constants_mut();
            if !consts.is_empty() {
                let j = rng.random_range(0..consts.len());
                let c = &mut consts[j];
                let factor = *[0.3, 0.5, 0.7, 1.5, 2.0, 3.0].choose(rng).expect("nonempty");
                **c = round_sig(**c * factor, 3);
            } else {
                let w = weight(rng);
                let e = std::mem::replace(&mut parts[i].1, crate::dsl::Expr::Const(0.0));
                parts[i].1 = crate::dsl::Expr::binary(crate::dsl::BinaryOp::Mul, crate::dsl::Expr::Const(w), e);
            }
        } else if roll < 0.65 && !parts.is_empty() {
            let i = rng.random_range(0..parts.len());
            parts.remove(i);
            added.push(component(rng, v, registry));
        } else if roll < 0.85 || parts.len() <= 1 {
            added.push(component(rng, v, registry));
        } else {
            let i = rng.random_range(0..parts.len());
            parts.remove(i);
        }
    }
    let mut all: Vec<(String, String)> = parts.into_iter().map(|(n, e)| (n, expr_to_string(&e))).collect();
    all.extend(added);
    if all.is_empty() {
        return fresh(rng, v, registry);
    }
    render(&all)
}
