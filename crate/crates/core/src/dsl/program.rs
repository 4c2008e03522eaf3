use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::Expr;
use super::print::expr_to_string;
use super::registry::{Binding, BindingError, VarRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub expr: Expr,
}

/// A reward program: named scalar components whose sum is the reward.
#[derive(Debug, Clone)]
pub struct RewardProgram {
    components: Vec<Component>,
    registry: Arc<VarRegistry>,
}

/// Structural equality: same components, same order. The registry is not
/// compared, since variable references already carry their resolved slots.
impl PartialEq for RewardProgram {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}

/// Result of evaluating a program at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub total: f64,
    /// Component values in declaration order.
    pub components: Vec<(String, f64)>,
}

impl Evaluation {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Binding(#[from] BindingError),
    #[error("frame has {got} slots, registry needs {expected}")]
    FrameWidth { expected: usize, got: usize },
}

impl RewardProgram {
    /// Assemble a program from already type-checked components.
    pub(crate) fn from_parts(components: Vec<Component>, registry: Arc<VarRegistry>) -> Self {
        Self { components, registry }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component_names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn registry(&self) -> &Arc<VarRegistry> {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Canonical text, one `name = expr` line per component.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for c in &self.components {
            out.push_str(&c.name);
            out.push_str(" = ");
            out.push_str(&expr_to_string(&c.expr));
            out.push('\n');
        }
        out
    }

    /// Variables referenced anywhere in the program.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.components {
            for v in c.expr.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Evaluate against a named binding covering the registry.
    pub fn evaluate(&self, binding: &Binding) -> Result<Evaluation, EvalError> {
        let frame = self.registry.frame_from_binding(binding)?;
        Ok(self.evaluate_frame(&frame))
    }

    /// Evaluate against a flat frame laid out by the registry.
    pub fn evaluate_frame(&self, frame: &[f64]) -> Evaluation {
        let mut values = vec![0.0; self.components.len()];
        let total = self.evaluate_into(frame, &mut values);
        Evaluation {
            total,
            components: self
                .components
                .iter()
                .zip(values)
                .map(|(c, v)| (c.name.clone(), v))
                .collect(),
        }
    }

    /// Hot-path evaluation: writes component values into `out` and returns
    /// their sum.
    pub fn evaluate_into(&self, frame: &[f64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(frame.len(), self.registry.frame_width());
        let mut total = 0.0;
        for (c, slot) in self.components.iter().zip(out.iter_mut()) {
            let v = c.expr.eval_scalar(frame);
            *slot = v;
            total += v;
        }
        total
    }

    pub fn checked_evaluate_frame(&self, frame: &[f64]) -> Result<Evaluation, EvalError> {
        if frame.len() != self.registry.frame_width() {
            return Err(EvalError::FrameWidth {
                expected: self.registry.frame_width(),
                got: frame.len(),
            });
        }
        Ok(self.evaluate_frame(frame))
    }
}
