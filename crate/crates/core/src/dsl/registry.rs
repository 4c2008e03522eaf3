use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape of a registered variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Scalar,
    Vector(usize),
}

impl VarKind {
    pub fn width(self) -> usize {
        match self {
            VarKind::Scalar => 1,
            VarKind::Vector(n) => n,
        }
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Scalar => f.write_str("scalar"),
            VarKind::Vector(n) => write!(f, "vector({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEntry {
    pub name: String,
    pub kind: VarKind,
    pub description: String,
    pub units: String,
}

impl VarEntry {
    pub fn scalar(name: &str, description: &str, units: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VarKind::Scalar,
            description: description.to_string(),
            units: units.to_string(),
        }
    }

    pub fn vector(name: &str, dim: usize, description: &str, units: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VarKind::Vector(dim),
            description: description.to_string(),
            units: units.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate variable name `{0}`")]
    Duplicate(String),
    #[error("variable `{0}` has an invalid identifier")]
    BadName(String),
    #[error("variable `{0}` must have vector dimension >= 1")]
    ZeroDimension(String),
    #[error("variable `{0}` has an empty description")]
    MissingDescription(String),
}

/// The set of named state variables a reward program may read.
///
/// Variables are laid out contiguously in a flat frame of `f64`s in
/// declaration order; `offset` gives the first slot of each variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRegistry {
    entries: Vec<VarEntry>,
    offsets: Vec<usize>,
    width: usize,
}

impl VarRegistry {
    pub fn new(entries: Vec<VarEntry>) -> Result<Self, RegistryError> {
        let mut offsets = Vec::with_capacity(entries.len());
        let mut width = 0;
        for (i, e) in entries.iter().enumerate() {
            if !is_identifier(&e.name) {
                return Err(RegistryError::BadName(e.name.clone()));
            }
            if entries[..i].iter().any(|p| p.name == e.name) {
                return Err(RegistryError::Duplicate(e.name.clone()));
            }
            if e.kind == VarKind::Vector(0) {
                return Err(RegistryError::ZeroDimension(e.name.clone()));
            }
            if e.description.trim().is_empty() {
                return Err(RegistryError::MissingDescription(e.name.clone()));
            }
            offsets.push(width);
            width += e.kind.width();
        }
        Ok(Self { entries, offsets, width })
    }

    pub fn entries(&self) -> &[VarEntry] {
        &self.entries
    }

    /// Total number of `f64` slots in a frame for this registry.
    pub fn frame_width(&self) -> usize {
        self.width
    }

    pub fn lookup(&self, name: &str) -> Option<(usize, &VarEntry)> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(|i| (self.offsets[i], &self.entries[i]))
    }

    pub fn offset_of(&self, index: usize) -> usize {
        self.offsets[index]
    }

    /// Flatten a named binding into a frame. Every registered variable
    /// must be present with the right shape and finite values.
    pub fn frame_from_binding(&self, binding: &Binding) -> Result<Vec<f64>, BindingError> {
        let mut frame = vec![0.0; self.width];
        for (entry, &offset) in self.entries.iter().zip(&self.offsets) {
            let value = binding
                .get(&entry.name)
                .ok_or_else(|| BindingError::Missing(entry.name.clone()))?;
            match (entry.kind, value) {
                (VarKind::Scalar, Value::Scalar(x)) => frame[offset] = *x,
                (VarKind::Vector(n), Value::Vector(v)) if v.len() == n => {
                    frame[offset..offset + n].copy_from_slice(v)
                }
                _ => {
                    return Err(BindingError::Shape {
                        name: entry.name.clone(),
                        expected: entry.kind,
                    })
                }
            }
            if let Some(bad) = value.as_slice().iter().find(|x| !x.is_finite()) {
                return Err(BindingError::NonFinite {
                    name: entry.name.clone(),
                    value: *bad,
                });
            }
        }
        Ok(frame)
    }

    /// Inverse of [`frame_from_binding`](Self::frame_from_binding).
    pub fn binding_from_frame(&self, frame: &[f64]) -> Binding {
        debug_assert_eq!(frame.len(), self.width);
        self.entries
            .iter()
            .zip(&self.offsets)
            .map(|(e, &o)| {
                let value = match e.kind {
                    VarKind::Scalar => Value::Scalar(frame[o]),
                    VarKind::Vector(n) => Value::Vector(frame[o..o + n].to_vec()),
                };
                (e.name.clone(), value)
            })
            .collect()
    }

    /// Two registries are compatible when they expose the same names with
    /// the same shapes, in the same order.
    pub fn is_compatible_with(&self, other: &VarRegistry) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }
}

/// A value bound to a registry variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            Value::Vector(_) => None,
        }
    }
}

pub type Binding = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindingError {
    #[error("missing binding for variable `{0}`")]
    Missing(String),
    #[error("variable `{name}` expects a {expected} value")]
    Shape { name: String, expected: VarKind },
    #[error("variable `{name}` is bound to non-finite value {value}")]
    NonFinite { name: String, value: f64 },
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
