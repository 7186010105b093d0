//! Corpus statistics: dialogue components, utterance lengths, command frequencies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::command::CommandKind;
use crate::dialogue::{Dialogue, Speaker};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
    pub median: f64,
    pub max: usize,
    pub min: usize,
}

impl LengthStats {
    pub fn from_lengths(lengths: &[usize]) -> Self {
        if lengths.is_empty() {
            return LengthStats::default();
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<usize>() as f64 / n;
        let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = lengths.to_vec();
        sorted.sort_unstable();
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
        } else {
            sorted[mid] as f64
        };
        LengthStats {
            count: lengths.len(),
            mean,
            stddev: var.sqrt(),
            median,
            max: *sorted.last().unwrap(),
            min: sorted[0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dialogues: usize,
    pub utterances: usize,
    pub user_utterances: usize,
    pub assistant_utterances: usize,
    pub commands: usize,
    pub images: usize,
    pub utterance_length: LengthStats,
    pub user_utterance_length: LengthStats,
    pub assistant_utterance_length: LengthStats,
    pub command_frequency: BTreeMap<CommandKind, usize>,
}

pub fn stats(ds: &[Dialogue]) -> StatsReport {
    let mut all = Vec::new();
    let mut user = Vec::new();
    let mut assistant = Vec::new();
    let mut freq: BTreeMap<CommandKind, usize> = CommandKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut commands = 0;
    let mut images = 0;
    for d in ds {
        for u in &d.utterances {
            all.push(u.tokens.len());
            match u.speaker {
                Speaker::User => user.push(u.tokens.len()),
                Speaker::Assistant => assistant.push(u.tokens.len()),
            }
        }
        for c in &d.commands {
            *freq.entry(c.command.kind()).or_default() += 1;
        }
        commands += d.commands.len();
        images += d.images.len();
    }
    StatsReport {
        dialogues: ds.len(),
        utterances: all.len(),
        user_utterances: user.len(),
        assistant_utterances: assistant.len(),
        commands,
        images,
        utterance_length: LengthStats::from_lengths(&all),
        user_utterance_length: LengthStats::from_lengths(&user),
        assistant_utterance_length: LengthStats::from_lengths(&assistant),
        command_frequency: freq,
    }
}

impl StatsReport {
    fn per_dialogue(&self, n: usize) -> f64 {
        if self.dialogues == 0 {
            0.0
        } else {
            n as f64 / self.dialogues as f64
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>14}{:>10}", "", "per dialogue", "total");
        let rows = [
            ("dialogue", self.dialogues),
            ("utterance", self.utterances),
            ("utterance (user)", self.user_utterances),
            ("utterance (assistant)", self.assistant_utterances),
            ("executable command", self.commands),
            ("image", self.images),
        ];
        for (name, n) in rows {
            let per = if name == "dialogue" {
                "-".to_string()
            } else {
                format!("{:.1}", self.per_dialogue(n))
            };
            let _ = writeln!(s, "{name:<24}{per:>14}{n:>10}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<24}{:>8}{:>8}{:>8}{:>6}{:>6}", "length", "avg", "stddev", "median", "max", "min");
        for (name, l) in [
            ("utterance", &self.utterance_length),
            ("utterance (user)", &self.user_utterance_length),
            ("utterance (assistant)", &self.assistant_utterance_length),
        ] {
            let _ = writeln!(
                s,
                "{name:<24}{:>8.2}{:>8.2}{:>8.1}{:>6}{:>6}",
                l.mean, l.stddev, l.median, l.max, l.min
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<24}{:>8}{:>8}", "command", "count", "share");
        for (kind, n) in &self.command_frequency {
            let share = if self.commands == 0 { 0.0 } else { 100.0 * *n as f64 / self.commands as f64 };
            let _ = writeln!(s, "{:<24}{n:>8}{share:>7.1}%", kind.label());
        }
        s
    }
}
