//! Modality masks: which utterances and detections the model may see.

use std::fmt;
use std::str::FromStr;

use caise_core::TaskInstance;
use serde::{Deserialize, Serialize};

/// Number of trailing utterances treated as the request.
pub const REQUEST_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    RequestOnly,
    DialogHistoryOnly,
    RequestHistory,
    VisionOnly,
    RequestVision,
    #[default]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::RequestOnly,
        AblationMode::DialogHistoryOnly,
        AblationMode::RequestHistory,
        AblationMode::VisionOnly,
        AblationMode::RequestVision,
        AblationMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::RequestOnly => "request-only",
            AblationMode::DialogHistoryOnly => "dialog-history-only",
            AblationMode::RequestHistory => "request+history",
            AblationMode::VisionOnly => "vision-only",
            AblationMode::RequestVision => "request+vision",
            AblationMode::Full => "full",
        }
    }

    pub fn uses_request(self) -> bool {
        matches!(self, AblationMode::RequestOnly | AblationMode::RequestHistory | AblationMode::RequestVision | AblationMode::Full)
    }

    pub fn uses_history(self) -> bool {
        matches!(self, AblationMode::DialogHistoryOnly | AblationMode::RequestHistory | AblationMode::Full)
    }

    pub fn uses_vision(self) -> bool {
        matches!(self, AblationMode::VisionOnly | AblationMode::RequestVision | AblationMode::Full)
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm || m.as_str().replace('+', "-") == norm)
            .ok_or_else(|| format!("unknown ablation mode `{s}` (expected one of {})", AblationMode::ALL.map(|m| m.as_str()).join(", ")))
    }
}

/// Removes the utterances and detections the mode hides. Image records are
/// kept (with their detections cleared) so the history stays aligned.
pub fn apply_ablation(instance: &TaskInstance, mode: AblationMode) -> TaskInstance {
    let mut out = instance.clone();
    let split = out.utterances.len().saturating_sub(REQUEST_LEN);
    out.utterances = match (mode.uses_history(), mode.uses_request()) {
        (true, true) => out.utterances,
        (true, false) => out.utterances[..split].to_vec(),
        (false, true) => out.utterances[split..].to_vec(),
        (false, false) => Vec::new(),
    };
    if !mode.uses_vision() {
        for image in &mut out.images {
            image.detections.clear();
        }
    }
    out
}
