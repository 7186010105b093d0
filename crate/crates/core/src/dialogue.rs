//! Dialogues, task instances and their JSON Lines persistence.
//!
//! One dialogue per line, schema version `caise-dialogue/1`:
//!
//! ```text
//! {"version":"caise-dialogue/1","id":"d0001",
//!  "utterances":[{"speaker":"user","tokens":["find","me","a","red","scooter"]}, ...],
//!  "commands":[{"command":"[search red scooter]","after_utterance":0,"request_type":"dir_req"}, ...],
//!  "images":[{"id":"corpus:c0001","detections":[...]}, ...]}
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Command, CommandKind};
use crate::detect::ObjectDetection;

pub const DIALOGUE_VERSION: &str = "caise-dialogue/1";

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("dialogue `{dialogue}`: command {command} aligned to utterance {after} but only {len} utterances exist")]
    Alignment {
        dialogue: String,
        command: usize,
        after: usize,
        len: usize,
    },
    #[error("dialogue `{0}`: {1}")]
    Invalid(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: &str) -> Self {
        Utterance {
            speaker,
            tokens: crate::text::tokenize(text),
        }
    }
}

/// Request taxonomy: direct, implied, and object-referring requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestType {
    DirReq,
    ImplReq,
    ObjRefReq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutedCommand {
    pub command: Command,
    /// Index of the utterance this command follows.
    pub after_utterance: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_type: Option<RequestType>,
}

/// One image in a dialogue's history: `corpus:<id>` or `edit:<sha256>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub id: String,
    pub detections: Vec<ObjectDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub commands: Vec<ExecutedCommand>,
    pub images: Vec<ImageRecord>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<(), DialogueError> {
        let invalid = |msg: String| DialogueError::Invalid(self.id.clone(), msg);
        if let Some(i) = self.utterances.iter().position(|u| u.tokens.is_empty()) {
            return Err(invalid(format!("utterance {i} has no tokens")));
        }
        if self.commands.len() != self.images.len() {
            return Err(invalid(format!(
                "{} commands but {} image records",
                self.commands.len(),
                self.images.len()
            )));
        }
        if let Some(first) = self.commands.first() {
            if first.command.kind() != CommandKind::Search {
                return Err(invalid("first command must be a search".into()));
            }
        }
        for (i, c) in self.commands.iter().enumerate() {
            if c.after_utterance >= self.utterances.len() {
                return Err(DialogueError::Alignment {
                    dialogue: self.id.clone(),
                    command: i,
                    after: c.after_utterance,
                    len: self.utterances.len(),
                });
            }
            c.command.validate().map_err(|e| invalid(e.to_string()))?;
        }
        for image in &self.images {
            for det in &image.detections {
                det.validate().map_err(&invalid)?;
            }
        }
        Ok(())
    }
}

/// One prediction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub dialogue_id: String,
    /// Position of the target among the dialogue's commands.
    pub turn: usize,
    /// Utterances up to and including the triggering request.
    pub utterances: Vec<Utterance>,
    /// Images produced by earlier commands.
    pub images: Vec<ImageRecord>,
    /// Earlier commands, in order.
    pub history: Vec<Command>,
    pub target: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_type: Option<RequestType>,
}

impl TaskInstance {
    pub fn detection_count(&self) -> usize {
        self.images.iter().map(|i| i.detections.len()).sum()
    }
}

/// One instance per executed command, in order.
pub fn instances_from_dialogue(d: &Dialogue) -> Result<Vec<TaskInstance>, DialogueError> {
    let mut out = Vec::with_capacity(d.commands.len());
    for (i, c) in d.commands.iter().enumerate() {
        if c.after_utterance >= d.utterances.len() {
            return Err(DialogueError::Alignment {
                dialogue: d.id.clone(),
                command: i,
                after: c.after_utterance,
                len: d.utterances.len(),
            });
        }
        out.push(TaskInstance {
            dialogue_id: d.id.clone(),
            turn: i,
            utterances: d.utterances[..=c.after_utterance].to_vec(),
            images: d.images[..i.min(d.images.len())].to_vec(),
            history: d.commands[..i].iter().map(|c| c.command.clone()).collect(),
            target: c.command.clone(),
            request_type: c.request_type,
        });
    }
    Ok(out)
}

pub fn instances_from_dialogues(ds: &[Dialogue]) -> Result<Vec<TaskInstance>, DialogueError> {
    let mut out = Vec::new();
    for d in ds {
        out.extend(instances_from_dialogue(d)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRecord {
    version: String,
    id: String,
    utterances: Vec<Utterance>,
    commands: Vec<ExecutedCommand>,
    images: Vec<ImageRecord>,
}

pub fn dialogue_to_line(d: &Dialogue) -> String {
    let record = DialogueRecord {
        version: DIALOGUE_VERSION.to_string(),
        id: d.id.clone(),
        utterances: d.utterances.clone(),
        commands: d.commands.clone(),
        images: d.images.clone(),
    };
    serde_json::to_string(&record).expect("dialogue serializes")
}

pub fn dialogue_from_line(line: &str, line_no: usize) -> Result<Dialogue, DialogueError> {
    let schema = |message: String| DialogueError::Schema { line: line_no, message };
    let record: DialogueRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
    if record.version != DIALOGUE_VERSION {
        return Err(schema(format!(
            "unsupported version `{}` (expected `{DIALOGUE_VERSION}`)",
            record.version
        )));
    }
    let d = Dialogue {
        id: record.id,
        utterances: record.utterances,
        commands: record.commands,
        images: record.images,
    };
    d.validate().map_err(|e| schema(e.to_string()))?;
    Ok(d)
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Dialogue>, DialogueError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(dialogue_from_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, ds: &[Dialogue]) -> Result<(), DialogueError> {
    for d in ds {
        writeln!(writer, "{}", dialogue_to_line(d))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Dialogue>, DialogueError> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_jsonl(path: &Path, ds: &[Dialogue]) -> Result<(), DialogueError> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), ds)
}
