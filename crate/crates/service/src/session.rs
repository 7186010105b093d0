//! One live edit session: the dialogue so far, the image history and at
//! most one pending proposal.

use caise_core::dialogue::{ExecutedCommand, ImageRecord};
use caise_core::{execute, parse_command, replay, Command, Dialogue, ExecError, ImageState, SearchBackend, Speaker, TaskInstance, Utterance};
use serde::{Deserialize, Serialize};

use crate::proposer::{Proposal, Proposer};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingProposal {
    #[serde(flatten)]
    pub proposal: Proposal,
    /// Index of the user utterance that triggered it.
    pub after_utterance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Resolution {
    Accept {
        #[serde(default)]
        assistant_text: Option<String>,
    },
    Override {
        command: String,
        #[serde(default)]
        assistant_text: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub image_id: String,
    pub image_index: usize,
    pub executed_command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceView {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandView {
    pub command: String,
    pub after_utterance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionView {
    pub concept: Vec<String>,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub index: usize,
    pub id: String,
    pub url: String,
    pub width: usize,
    pub height: usize,
    pub detections: Vec<DetectionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub utterances: Vec<UtteranceView>,
    pub commands: Vec<CommandView>,
    pub images: Vec<ImageView>,
    pub pending: Option<PendingProposal>,
}

#[derive(Debug, Clone)]
pub struct Session {
    dialogue: Dialogue,
    states: Vec<ImageState>,
    pending: Option<PendingProposal>,
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Session {
            dialogue: Dialogue {
                id: id.into(),
                utterances: Vec::new(),
                commands: Vec::new(),
                images: Vec::new(),
            },
            states: Vec::new(),
            pending: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.dialogue.id
    }

    pub fn dialogue(&self) -> &Dialogue {
        &self.dialogue
    }

    pub fn pending(&self) -> Option<&PendingProposal> {
        self.pending.as_ref()
    }

    pub fn current(&self) -> Option<&ImageState> {
        self.states.last()
    }

    pub fn commands(&self) -> Vec<Command> {
        self.dialogue.commands.iter().map(|c| c.command.clone()).collect()
    }

    /// The prediction problem posed by the latest utterance. The target is a
    /// placeholder since the answer is unknown.
    pub fn instance(&self) -> TaskInstance {
        TaskInstance {
            dialogue_id: self.dialogue.id.clone(),
            turn: self.dialogue.commands.len(),
            utterances: self.dialogue.utterances.clone(),
            images: self.dialogue.images.clone(),
            history: self.commands(),
            target: Command::ImageCutout,
            request_type: None,
        }
    }

    /// Appends a user utterance and stores the proposer's answer as pending.
    /// On a proposer failure the utterance is kept and nothing is pending.
    pub fn add_utterance(&mut self, text: &str, proposer: &dyn Proposer) -> Result<&PendingProposal, ServiceError> {
        if self.pending.is_some() {
            return Err(ServiceError::ProposalPending);
        }
        let utterance = Utterance::new(Speaker::User, text);
        if utterance.tokens.is_empty() {
            return Err(ServiceError::EmptyUtterance);
        }
        self.dialogue.utterances.push(utterance);
        let proposal = proposer.propose(&self.instance())?;
        Ok(self.pending.insert(PendingProposal {
            proposal,
            after_utterance: self.dialogue.utterances.len() - 1,
        }))
    }

    /// Executes the accepted or overriding command. Any failure leaves the
    /// session untouched with the proposal still pending.
    pub fn resolve(&mut self, resolution: &Resolution, search: &dyn SearchBackend) -> Result<Resolved, ServiceError> {
        let pending = self.pending.as_ref().ok_or(ServiceError::NoPendingProposal)?;
        let (command, assistant_text) = match resolution {
            Resolution::Accept { assistant_text } => {
                let cmd = pending
                    .proposal
                    .command()
                    .ok_or_else(|| ServiceError::UnparseableProposal(pending.proposal.proposed_command.clone()))?;
                (cmd, assistant_text)
            }
            Resolution::Override { command, assistant_text } => (parse_command(command)?, assistant_text),
        };
        let next = execute(&command, self.states.last(), search)?;
        let after_utterance = pending.after_utterance;
        self.pending = None;
        let image_id = next.record.id.clone();
        self.dialogue.commands.push(ExecutedCommand {
            command: command.clone(),
            after_utterance,
            request_type: None,
        });
        self.dialogue.images.push(next.record.clone());
        self.states.push(next);
        let reply = assistant_text.clone().unwrap_or_else(|| format!("done: {command}"));
        let reply = Utterance::new(Speaker::Assistant, &reply);
        if !reply.tokens.is_empty() {
            self.dialogue.utterances.push(reply);
        }
        Ok(Resolved {
            image_id,
            image_index: self.states.len() - 1,
            executed_command: command.to_string(),
        })
    }

    pub fn image_png(&self, n: usize) -> Result<Vec<u8>, ServiceError> {
        let state = self.states.get(n).ok_or(ServiceError::ImageNotFound(n))?;
        state.image.to_png_bytes().map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Re-executes the recorded commands from an empty session.
    pub fn replay(&self, search: &dyn SearchBackend) -> Result<Vec<ImageState>, ExecError> {
        replay(&self.commands(), search)
    }

    pub fn snapshot(&self) -> Snapshot {
        let id = &self.dialogue.id;
        Snapshot {
            session_id: id.clone(),
            utterances: self
                .dialogue
                .utterances
                .iter()
                .map(|u| UtteranceView {
                    speaker: u.speaker,
                    text: u.tokens.join(" "),
                })
                .collect(),
            commands: self
                .dialogue
                .commands
                .iter()
                .map(|c| CommandView {
                    command: c.command.to_string(),
                    after_utterance: c.after_utterance,
                })
                .collect(),
            images: self
                .states
                .iter()
                .enumerate()
                .map(|(index, s)| image_view(id, index, s))
                .collect(),
            pending: self.pending.clone(),
        }
    }
}

fn image_view(session: &str, index: usize, s: &ImageState) -> ImageView {
    let ImageRecord { id, detections } = &s.record;
    ImageView {
        index,
        id: id.clone(),
        url: format!("/sessions/{session}/images/{index}"),
        width: s.image.width(),
        height: s.image.height(),
        detections: detections
            .iter()
            .map(|d| DetectionView {
                concept: d.concept.clone(),
                bbox: d.bbox,
            })
            .collect(),
    }
}
