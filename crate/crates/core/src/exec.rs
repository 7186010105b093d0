//! Command dispatch against the current image and a search backend.

use thiserror::Error;

use crate::command::Command;
use crate::corpus::{Corpus, CorpusError};
use crate::detect::{DetectionProvider, ObjectDetection};
use crate::dialogue::ImageRecord;
use crate::edit::{self, CutoutError};
use crate::image::RasterImage;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no current image; run a search first")]
    NoCurrentImage,
    #[error("search returned no results")]
    SearchEmpty,
    #[error(transparent)]
    CutoutFailed(#[from] CutoutError),
    #[error("search backend: {0}")]
    Backend(String),
}

impl ExecError {
    pub fn class(&self) -> &'static str {
        match self {
            ExecError::NoCurrentImage => "NoCurrentImage",
            ExecError::SearchEmpty => "SearchEmpty",
            ExecError::CutoutFailed(_) => "CutoutFailed",
            ExecError::Backend(_) => "BackendError",
        }
    }
}

/// A retrieved corpus image with its detections.
#[derive(Debug, Clone)]
pub struct Retrieved {
    pub id: String,
    pub image: RasterImage,
    pub detections: Vec<ObjectDetection>,
}

pub trait SearchBackend {
    /// The rank-1 image for `query`.
    fn top_result(&self, query: &[String]) -> Result<Retrieved, ExecError>;
}

impl SearchBackend for Corpus {
    fn top_result(&self, query: &[String]) -> Result<Retrieved, ExecError> {
        let hits = match self.index().search(query, 1) {
            Ok(h) => h,
            Err(CorpusError::SearchEmpty | CorpusError::EmptyQuery) => return Err(ExecError::SearchEmpty),
            Err(e) => return Err(ExecError::Backend(e.to_string())),
        };
        let id = hits.into_iter().next().ok_or(ExecError::SearchEmpty)?.id;
        let image = self.image(&id).map_err(|e| ExecError::Backend(e.to_string()))?;
        let detections = self.detections(&id);
        Ok(Retrieved { id, image, detections })
    }
}

/// The image currently shown in a session or dialogue, with its record.
#[derive(Debug, Clone)]
pub struct ImageState {
    pub image: RasterImage,
    pub record: ImageRecord,
}

pub type ExecutionResult = ImageState;

/// Applies exactly one command. Edits carry the source image's detections
/// forward under the new record id.
pub fn execute(cmd: &Command, current: Option<&ImageState>, search: &dyn SearchBackend) -> Result<ExecutionResult, ExecError> {
    if let Command::Search { query } = cmd {
        let hit = search.top_result(query)?;
        let id = format!("corpus:{}", hit.id);
        let detections = hit
            .detections
            .into_iter()
            .map(|d| ObjectDetection { image_id: id.clone(), ..d })
            .collect();
        return Ok(ImageState {
            image: hit.image,
            record: ImageRecord { id, detections },
        });
    }
    let current = current.ok_or(ExecError::NoCurrentImage)?;
    let img = &current.image;
    let image = match cmd {
        Command::AdjustColor { color, intensity } => edit::adjust_color(img, *color, *intensity),
        Command::AdjustBrightness { value } => edit::adjust_brightness(img, *value),
        Command::AdjustContrast { value } => edit::adjust_contrast(img, *value),
        Command::Rotate { degrees } => edit::rotate(img, *degrees),
        Command::ImageCutout => edit::image_cutout(img)?,
        Command::Search { .. } => unreachable!("handled above"),
    };
    let id = format!("edit:{}", image.content_hash());
    let detections = current
        .record
        .detections
        .iter()
        .map(|d| ObjectDetection {
            image_id: id.clone(),
            ..d.clone()
        })
        .collect();
    Ok(ImageState {
        image,
        record: ImageRecord { id, detections },
    })
}

/// Re-executes a command list from scratch and returns every intermediate state.
pub fn replay(commands: &[Command], search: &dyn SearchBackend) -> Result<Vec<ImageState>, ExecError> {
    let mut states: Vec<ImageState> = Vec::with_capacity(commands.len());
    for cmd in commands {
        let next = execute(cmd, states.last(), search)?;
        states.push(next);
    }
    Ok(states)
}
