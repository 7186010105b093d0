//! Exact-match command accuracy with the search-order and color-intensity
//! relaxations, per-type breakdown and dialogue success rate.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Command, CommandKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions, {gts} ground truths, {ids} dialogue ids")]
    LengthMismatch { preds: usize, gts: usize, ids: usize },
}

/// Whether a prediction counts as correct. `None` is an unparseable prediction.
///
/// Search queries compare as token multisets; color changes compare the color
/// only; everything else must match exactly.
pub fn command_match(pred: Option<&Command>, gt: &Command) -> bool {
    let Some(pred) = pred else { return false };
    match (pred, gt) {
        (Command::Search { query: a }, Command::Search { query: b }) => {
            let mut a = a.clone();
            let mut b = b.clone();
            a.sort();
            b.sort();
            a == b
        }
        (Command::AdjustColor { color: a, .. }, Command::AdjustColor { color: b, .. }) => a == b,
        (a, b) => a == b,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub dialogue_id: String,
    pub pred: Option<Command>,
    pub gt: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub correct: usize,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Instance accuracy in percent.
    pub total: f64,
    pub correct: usize,
    pub count: usize,
    pub per_type: BTreeMap<CommandKind, TypeScore>,
    pub dialogues: usize,
    pub dialogues_all_correct: usize,
    /// Percent of dialogues whose every instance is correct.
    pub dialogue_success: f64,
}

fn pct(correct: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        100.0 * correct as f64 / count as f64
    }
}

pub fn accuracy(items: &[EvalItem]) -> EvalReport {
    let mut per_type: BTreeMap<CommandKind, TypeScore> = CommandKind::ALL.iter().map(|&k| (k, TypeScore::default())).collect();
    let mut by_dialogue: HashMap<&str, bool> = HashMap::new();
    let mut correct = 0;
    for item in items {
        let ok = command_match(item.pred.as_ref(), &item.gt);
        let slot = per_type.entry(item.gt.kind()).or_default();
        slot.count += 1;
        if ok {
            slot.correct += 1;
            correct += 1;
        }
        let all = by_dialogue.entry(item.dialogue_id.as_str()).or_insert(true);
        *all &= ok;
    }
    for score in per_type.values_mut() {
        score.accuracy = pct(score.correct, score.count);
    }
    let dialogues_all_correct = by_dialogue.values().filter(|&&ok| ok).count();
    EvalReport {
        total: pct(correct, items.len()),
        correct,
        count: items.len(),
        per_type,
        dialogues: by_dialogue.len(),
        dialogues_all_correct,
        dialogue_success: pct(dialogues_all_correct, by_dialogue.len()),
    }
}

/// [`accuracy`] over parallel lists.
pub fn accuracy_lists(preds: &[Option<Command>], gts: &[Command], dialogue_ids: &[String]) -> Result<EvalReport, EvalError> {
    if preds.len() != gts.len() || gts.len() != dialogue_ids.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
            ids: dialogue_ids.len(),
        });
    }
    let items: Vec<EvalItem> = preds
        .iter()
        .zip(gts)
        .zip(dialogue_ids)
        .map(|((p, g), d)| EvalItem {
            dialogue_id: d.clone(),
            pred: p.clone(),
            gt: g.clone(),
        })
        .collect();
    Ok(accuracy(&items))
}

impl EvalReport {
    pub fn table_header() -> String {
        let mut s = format!("{:<28}{:>8}", "model", "total");
        for k in CommandKind::ALL {
            let _ = write!(s, "{:>12}", k.label());
        }
        let _ = write!(s, "{:>12}", "dialogue");
        s
    }

    pub fn table_row(&self, name: &str) -> String {
        let mut s = format!("{name:<28}{:>8.2}", self.total);
        for k in CommandKind::ALL {
            let score = self.per_type.get(&k).copied().unwrap_or_default();
            let _ = write!(s, "{:>12.2}", score.accuracy);
        }
        let _ = write!(s, "{:>12.2}", self.dialogue_success);
        s
    }

    pub fn to_table(&self, name: &str) -> String {
        format!("{}\n{}\n", Self::table_header(), self.table_row(name))
    }

    /// Element-wise mean of several reports (e.g. one per seed).
    pub fn mean(reports: &[EvalReport]) -> EvalReport {
        if reports.is_empty() {
            return EvalReport::default();
        }
        let n = reports.len() as f64;
        let mut out = reports[0].clone();
        out.total = reports.iter().map(|r| r.total).sum::<f64>() / n;
        out.dialogue_success = reports.iter().map(|r| r.dialogue_success).sum::<f64>() / n;
        for (k, score) in out.per_type.iter_mut() {
            score.accuracy = reports.iter().map(|r| r.per_type.get(k).map_or(0.0, |s| s.accuracy)).sum::<f64>() / n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::parse_command;

    fn c(s: &str) -> Command {
        parse_command(s).unwrap()
    }

    #[test]
    fn relaxations() {
        assert!(command_match(Some(&c("[search juice glass]")), &c("[search glass juice]")));
        assert!(command_match(Some(&c("[adjust_color blue 0.3]")), &c("[adjust_color blue 0.9]")));
        assert!(!command_match(Some(&c("[adjust_attr brightness 30]")), &c("[adjust_attr brightness -30]")));
        assert!(!command_match(Some(&c("[rotate 90]")), &c("[adjust_attr contrast 90]")));
        assert!(!command_match(None, &c("[image_cutout]")));
        assert!(!command_match(Some(&c("[search red red bus]")), &c("[search red bus bus]")));
    }

    #[test]
    fn dialogue_success_requires_all_correct() {
        let gts: Vec<Command> = ["[search a]", "[rotate 90]", "[image_cutout]", "[adjust_attr contrast 10]"].map(c).to_vec();
        let mut preds: Vec<Option<Command>> = gts.iter().cloned().map(Some).collect();
        preds[3] = None;
        let ids = vec!["d".to_string(); 4];
        let r = accuracy_lists(&preds, &gts, &ids).unwrap();
        assert_eq!(r.total, 75.0);
        assert_eq!(r.dialogue_success, 0.0);
        assert_eq!(r.per_type[&CommandKind::Contrast].count, 1);
        assert_eq!(r.per_type.values().map(|s| s.count).sum::<usize>(), 4);
    }

    #[test]
    fn perfect_predictions() {
        let gts: Vec<Command> = ["[search a]", "[rotate 90]"].map(c).to_vec();
        let preds = gts.iter().cloned().map(Some).collect::<Vec<_>>();
        let r = accuracy_lists(&preds, &gts, &["x".into(), "y".into()]).unwrap();
        assert_eq!(r.total, 100.0);
        assert_eq!(r.dialogue_success, 100.0);
        assert_eq!(r.per_type[&CommandKind::Rotation].accuracy, 100.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(accuracy_lists(&[None], &[], &[]).is_err());
    }
}
