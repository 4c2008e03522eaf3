//! Generator that plays back recorded samples in order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Generator, GeneratorError, ProposalRequest};

/// One recorded sample. `score` is used by scripted evaluation and is
/// ignored by the generator itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub text: String,
    #[serde(default)]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub env: String,
    pub entries: Vec<ReplayEntry>,
}

impl ReplayFixture {
    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        serde_json::from_str(text).map_err(|e| GeneratorError::Invalid(format!("bad replay fixture: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct ReplayGenerator {
    entries: Vec<String>,
    cursor: usize,
}

impl ReplayGenerator {
    pub fn new(fixture: &ReplayFixture) -> Self {
        Self {
            entries: fixture.entries.iter().map(|e| e.text.clone()).collect(),
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }
}

impl Generator for ReplayGenerator {
    fn kind(&self) -> &'static str {
        "replay"
    }

    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError> {
        if request.k > self.remaining() {
            return Err(GeneratorError::FixtureExhausted {
                requested: request.k,
                remaining: self.remaining(),
            });
        }
        let out = self.entries[self.cursor..self.cursor + request.k].to_vec();
        self.cursor += request.k;
        Ok(out)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn skip(&mut self, n: usize) {
        self.cursor = (self.cursor + n).min(self.entries.len());
    }
}
