//! Prompt/response codec and chat-completion clients for the model-backed
//! experiments.

mod client;
mod config;
mod prompt;
mod response;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use client::{
    query_model, AuditLog, ChatClient, ChatRequest, Completion, EndpointClient, HttpReply,
    HttpTransport, MockClient, MockFixtures, Query, ScriptedTransport, Transport,
    TransportFailure,
};
pub use config::ModelConfig;
pub use prompt::{build_prompt, render_cg, render_relations, Prompt, TurnContext};
pub use response::{
    cg_reply_json, extract_json_object, parse_cg_response, parse_structure_response,
    relations_reply_json, views_reply_json, CgKey,
};

/// The four evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Experiment {
    /// Builder actions to structure.
    ActionsToStructure,
    /// Aligned multimodal events to structure.
    EventsToStructure,
    /// Axiomatic common ground to structure, no model involved.
    CgcToStructure,
    /// Aligned multimodal events to common ground.
    EventsToCg,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::ActionsToStructure,
        Experiment::EventsToStructure,
        Experiment::CgcToStructure,
        Experiment::EventsToCg,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn uses_model(self) -> bool {
        self != Experiment::CgcToStructure
    }

    pub fn label(self) -> &'static str {
        match self {
            Experiment::ActionsToStructure => "Actions->Structure",
            Experiment::EventsToStructure => "Multimodal->Structure",
            Experiment::CgcToStructure => "CGC->Structure",
            Experiment::EventsToCg => "Multimodal->CG",
        }
    }
}

impl From<Experiment> for u8 {
    fn from(e: Experiment) -> u8 {
        e.number()
    }
}

impl TryFrom<u8> for Experiment {
    type Error = LlmError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            1..=4 => Ok(Experiment::ALL[n as usize - 1]),
            _ => Err(LlmError::UnknownExperiment(n.to_string())),
        }
    }
}

impl FromStr for Experiment {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .map_err(|_| LlmError::UnknownExperiment(s.to_string()))
            .and_then(Experiment::try_from)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("unknown experiment `{0}` (expected 1-4)")]
    UnknownExperiment(String),
    #[error("experiment {0} does not query a model")]
    NoPrompt(Experiment),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("request timed out after {attempts} attempt(s) of {timeout_secs} s each")]
    Timeout { attempts: usize, timeout_secs: f64 },
    #[error("transport failed after {} attempt(s): {}", .attempts.len(), .attempts.join("; "))]
    Transport { attempts: Vec<String> },
    #[error("endpoint refused the request with status {status}: {body}")]
    EndpointRefusal { status: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    BadReply(String),
    #[error("mock fixtures have no reply for `{0}`")]
    NoFixture(String),
    #[error("mock fixtures: {0}")]
    Fixtures(String),
}

impl LlmError {
    /// True for failures of the model endpoint or its credentials.
    pub fn is_endpoint(&self) -> bool {
        matches!(
            self,
            LlmError::Timeout { .. }
                | LlmError::Transport { .. }
                | LlmError::EndpointRefusal { .. }
                | LlmError::BadReply(_)
                | LlmError::MissingApiKey(_)
        )
    }
}
