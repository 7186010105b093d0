//! Command proposers: the trained model, or a fixed script for tests and demos.

use std::collections::HashMap;
use std::path::Path;

use caise_core::{parse_command, Command, TaskInstance};
use caise_model::{GenExt, TokenSource};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// A proposed command with its per-token gate weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// Bracketed command text, possibly unparseable.
    pub proposed_command: String,
    pub tokens: Vec<String>,
    /// Generator, utterance copy and concept copy weight per token.
    pub gate_trace: Vec<[f64; 3]>,
    pub token_sources: Vec<TokenSource>,
    /// Whether `proposed_command` parses.
    pub valid: bool,
}

impl Proposal {
    pub fn command(&self) -> Option<Command> {
        if self.valid {
            parse_command(&self.proposed_command).ok()
        } else {
            None
        }
    }
}

pub trait Proposer: Send + Sync {
    /// Proposes the next command. `instance.target` is a placeholder and must be ignored.
    fn propose(&self, instance: &TaskInstance) -> Result<Proposal, ServiceError>;

    /// Detection feature length expected from the corpus, if fixed.
    fn feature_dim(&self) -> Option<usize> {
        None
    }
}

impl Proposer for GenExt {
    fn propose(&self, instance: &TaskInstance) -> Result<Proposal, ServiceError> {
        let d = self.greedy_decode(instance).map_err(|e| ServiceError::Model(e.to_string()))?;
        Ok(Proposal {
            proposed_command: d.command.as_ref().map_or_else(|| format!("[{}]", d.tokens.join(" ")), Command::to_string),
            valid: d.command.is_some(),
            tokens: d.tokens,
            gate_trace: d.gate_trace,
            token_sources: d.sources,
        })
    }

    fn feature_dim(&self) -> Option<usize> {
        Some(self.config.feature_dim)
    }
}

/// Maps the latest user utterance (normalized to its tokens) to a fixed
/// command. Each token is attributed to the utterance if it occurs there,
/// else to a detected concept, else to the generator, with a one-hot gate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedProposer {
    /// Utterance text to command text.
    pub script: HashMap<String, String>,
    /// Proposal for utterances missing from the script.
    #[serde(default)]
    pub fallback: Option<String>,
}

impl ScriptedProposer {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: Into<String>,
    {
        ScriptedProposer {
            script: pairs.into_iter().map(|(k, v)| (key(k.as_ref()), v.into())).collect(),
            fallback: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let raw: ScriptedProposer = serde_json::from_str(&text).map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(ScriptedProposer {
            script: raw.script.into_iter().map(|(k, v)| (key(&k), v)).collect(),
            fallback: raw.fallback,
        })
    }
}

fn key(text: &str) -> String {
    caise_core::text::tokenize(text).join(" ")
}

impl Proposer for ScriptedProposer {
    fn propose(&self, instance: &TaskInstance) -> Result<Proposal, ServiceError> {
        let last = instance.utterances.last().map(|u| u.tokens.join(" ")).unwrap_or_default();
        let text = self
            .script
            .get(&last)
            .or(self.fallback.as_ref())
            .ok_or_else(|| ServiceError::Model(format!("no scripted proposal for `{last}`")))?;
        let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
        let tokens: Vec<String> = inner.split_whitespace().map(str::to_string).collect();
        let in_utterances = |t: &str| instance.utterances.iter().any(|u| u.tokens.iter().any(|x| x == t));
        let in_concepts = |t: &str| instance.images.iter().flat_map(|i| &i.detections).any(|d| d.concept.iter().any(|x| x == t));
        let mut gate_trace = Vec::with_capacity(tokens.len());
        let mut token_sources = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let (gate, src) = if in_utterances(t) {
                ([0.0, 1.0, 0.0], TokenSource::UtteranceCopy)
            } else if in_concepts(t) {
                ([0.0, 0.0, 1.0], TokenSource::ConceptCopy)
            } else {
                ([1.0, 0.0, 0.0], TokenSource::Generator)
            };
            gate_trace.push(gate);
            token_sources.push(src);
        }
        let parsed = parse_command(text).ok();
        Ok(Proposal {
            proposed_command: parsed.as_ref().map_or_else(|| format!("[{}]", tokens.join(" ")), Command::to_string),
            valid: parsed.is_some(),
            tokens,
            gate_trace,
            token_sources,
        })
    }
}
