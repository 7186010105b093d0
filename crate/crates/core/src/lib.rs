//! Executable image search and editing commands.
//!
//! The command language, pixel-exact editing operations, a keyword-searchable
//! image corpus, dialogue data with synthetic fixtures, and the exact-match
//! evaluation metric.

pub mod command;
pub mod corpus;
pub mod detect;
pub mod dialogue;
pub mod edit;
pub mod eval;
pub mod exec;
pub mod image;
pub mod par;
pub mod split;
pub mod stats;
pub mod synth;
pub mod text;

pub use command::{format_command, parse_command, ColorName, Command, CommandError, CommandKind, Intensity};
pub use corpus::{Corpus, CorpusEntry, CorpusError, CorpusIndex, ImageStore, SearchHit};
pub use detect::{DetectionProvider, ObjectDetection};
pub use dialogue::{Dialogue, DialogueError, RequestType, Speaker, TaskInstance, Utterance};
pub use eval::{accuracy, command_match, EvalItem, EvalReport};
pub use exec::{execute, replay, ExecError, ImageState, SearchBackend};
pub use image::{ImageError, RasterImage};
pub use par::Exec;
