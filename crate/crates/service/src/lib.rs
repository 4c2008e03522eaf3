//! Run orchestration from the command line and over HTTP.

pub mod api;
pub mod report;
pub mod transport;

use std::time::Duration;

use rewardsmith_core::evolution::{build_generator, GeneratorKind, RunConfig, SearchError};
use rewardsmith_core::generate::llm::ChatTransport;
use rewardsmith_core::generate::Generator;

use transport::HttpChatTransport;

/// Build the generator a run config names, connecting chat-backed kinds
/// to their HTTP endpoint. The API key is read from the variable named by
/// `api_key_env`.
pub fn make_generator(cfg: &RunConfig) -> Result<Box<dyn Generator>, SearchError> {
    let g = &cfg.generator;
    let needs_chat = g.kind == GeneratorKind::Llm || (g.kind == GeneratorKind::L2r && g.l2r_use_llm);
    let transport: Option<Box<dyn ChatTransport>> = if needs_chat {
        let api_base = g
            .api_base
            .as_deref()
            .ok_or_else(|| SearchError::Config("api_base is required for chat generators".into()))?;
        let api_key = match &g.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| SearchError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let t = HttpChatTransport::new(api_base, api_key, Duration::from_secs(g.request_timeout_s))
            .map_err(SearchError::Config)?;
        Some(Box::new(t))
    } else {
        None
    };
    build_generator(cfg, transport)
}
