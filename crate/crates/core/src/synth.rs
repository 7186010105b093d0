//! Synthetic fixtures: a colored-shape image corpus with exact concept tokens
//! and template-driven dialogues covering direct, implied and
//! object-referring requests.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::command::{ColorName, Command, CommandKind, Intensity};
use crate::corpus::{Corpus, CorpusEntry};
use crate::detect::DetectionSpec;
use crate::dialogue::{Dialogue, ExecutedCommand, ImageRecord, RequestType, Speaker, Utterance};
use crate::edit::color_rgb;
use crate::exec::{execute, ExecError, ImageState};
use crate::image::RasterImage;

pub const TEMPLATE_VERSION: &str = "caise-templates/1";

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

/// Head nouns used for synthetic corpus objects.
pub const NOUNS: [&str; 150] = [
    "scooter", "bus", "car", "truck", "bicycle", "motorcycle", "train", "boat", "airplane", "helicopter",
    "tractor", "van", "taxi", "rocket", "sailboat", "canoe", "wagon", "sled", "skateboard", "tram",
    "dog", "cat", "horse", "cow", "sheep", "pig", "rabbit", "fox", "bear", "lion",
    "tiger", "elephant", "giraffe", "zebra", "monkey", "panda", "koala", "penguin", "owl", "parrot",
    "duck", "swan", "eagle", "dolphin", "whale", "shark", "turtle", "frog", "snake", "lizard",
    "apple", "banana", "cherry", "grape", "lemon", "mango", "orange", "peach", "pear", "plum",
    "strawberry", "watermelon", "pineapple", "carrot", "tomato", "pepper", "pumpkin", "onion", "potato", "mushroom",
    "cake", "cookie", "donut", "pizza", "burger", "sandwich", "muffin", "pie", "candy", "juice",
    "glass", "cup", "mug", "bottle", "bowl", "plate", "spoon", "fork", "knife", "teapot",
    "chair", "table", "sofa", "bed", "lamp", "clock", "vase", "mirror", "shelf", "desk",
    "umbrella", "backpack", "suitcase", "hat", "shoe", "boot", "glove", "scarf", "shirt", "dress",
    "jacket", "sweater", "balloon", "kite", "ball", "guitar", "piano", "drum", "violin", "trumpet",
    "flower", "tree", "rose", "tulip", "cactus", "leaf", "house", "tower", "bridge", "castle",
    "lighthouse", "tent", "fence", "bench", "fountain", "robot", "camera", "phone", "laptop", "book",
    "pencil", "candle", "key", "crown", "ring", "star", "heart", "flag", "anchor", "bell",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("template bank has no phrasing for {0} requests")]
    TemplateGap(&'static str),
    #[error("unsupported template bank version `{0}`")]
    Version(String),
    #[error("template bank: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("could not complete dialogue {0}: {1}")]
    Exec(usize, ExecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Greetings {
    pub user: Vec<String>,
    pub assistant: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clarification {
    pub vague: Vec<String>,
    pub question: Vec<String>,
    pub answer: Vec<String>,
}

/// Request and response phrasings with `{placeholder}` slots.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBank {
    pub version: String,
    pub greetings: Greetings,
    pub acknowledgements: Vec<String>,
    /// Command kind key to request variant to phrasings.
    pub requests: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub follow_ups: BTreeMap<String, Vec<String>>,
    pub clarifications: BTreeMap<String, Clarification>,
    pub confirmations: BTreeMap<String, Vec<String>>,
}

pub fn kind_key(kind: CommandKind) -> &'static str {
    match kind {
        CommandKind::Search => "search",
        CommandKind::Color => "color",
        CommandKind::Brightness => "brightness",
        CommandKind::Contrast => "contrast",
        CommandKind::Rotation => "rotation",
        CommandKind::RemoveBackground => "cutout",
    }
}

impl TemplateBank {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("bundled template bank is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let bank: TemplateBank = serde_json::from_str(text)?;
        if bank.version != TEMPLATE_VERSION {
            return Err(SynthError::Version(bank.version));
        }
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Fails with the first command kind that has no request phrasing.
    pub fn check_coverage(&self) -> Result<(), SynthError> {
        for kind in CommandKind::ALL {
            let key = kind_key(kind);
            let covered = self
                .requests
                .get(key)
                .is_some_and(|variants| variants.values().any(|v| !v.is_empty()));
            if !covered {
                return Err(SynthError::TemplateGap(key));
            }
        }
        Ok(())
    }

    fn variant(&self, kind: CommandKind, name: &str) -> &[String] {
        self.requests
            .get(kind_key(kind))
            .and_then(|v| v.get(name))
            .map_or(&[], Vec::as_slice)
    }

    fn clarification(&self, kind: CommandKind) -> Option<&Clarification> {
        self.clarifications
            .get(kind_key(kind))
            .filter(|c| !c.vague.is_empty() && !c.question.is_empty() && !c.answer.is_empty())
    }
}

/// Fills `{name}` slots.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

// ---------------------------------------------------------------------------
// Corpus

const IMAGE_W: usize = 64;
const IMAGE_H: usize = 48;

const SECONDARY_SLOTS: [[f64; 4]; 2] = [[0.03, 0.04, 0.19, 0.22], [0.81, 0.76, 0.97, 0.96]];

fn color_tokens(c: ColorName) -> Vec<String> {
    c.tokens().iter().map(|t| t.to_string()).collect()
}

fn concept(color: ColorName, noun: &str) -> Vec<String> {
    let mut c = color_tokens(color);
    c.push(noun.to_string());
    c
}

/// `n` entries, each a main object plus one or two small secondary objects
/// in different colors.
pub fn synth_corpus(seed: u64, n: usize) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = format!("s{i:05}");
            let color = *ColorName::ALL.choose(&mut rng).unwrap();
            let noun = *NOUNS.choose(&mut rng).unwrap();
            let q = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.gen_range(lo..hi) * 100.0).round() / 100.0;
            let main = [q(&mut rng, 0.26, 0.36), q(&mut rng, 0.26, 0.36), q(&mut rng, 0.64, 0.74), q(&mut rng, 0.64, 0.74)];
            let mut detections = vec![DetectionSpec {
                bbox: main,
                concept: concept(color, noun),
                feature: None,
            }];
            let mut caption = format!("a {} {noun}", color.tokens().join(" "));
            let n_secondary = rng.gen_range(1..=2);
            let mut used = vec![color];
            for slot in SECONDARY_SLOTS.iter().take(n_secondary) {
                let c2 = loop {
                    let c = *ColorName::ALL.choose(&mut rng).unwrap();
                    if !used.contains(&c) {
                        break c;
                    }
                };
                used.push(c2);
                let noun2 = *NOUNS.choose(&mut rng).unwrap();
                caption.push_str(&format!(" with a {} {noun2}", c2.tokens().join(" ")));
                detections.push(DetectionSpec {
                    bbox: *slot,
                    concept: concept(c2, noun2),
                    feature: None,
                });
            }
            CorpusEntry {
                id: id.clone(),
                path: format!("images/{id}.png").into(),
                caption,
                tags: vec![noun.to_string()],
                detections,
            }
        })
        .collect()
}

/// Draws an entry: a neutral background keyed on the id, with each detection
/// box filled in its concept color.
pub fn render_entry(entry: &CorpusEntry) -> RasterImage {
    let digest = Sha256::digest(entry.id.as_bytes());
    let shade = 40 + digest[0] % 40;
    let mut img = RasterImage::filled(IMAGE_W, IMAGE_H, [shade, shade, shade]).expect("fixed non-zero size");
    for det in &entry.detections {
        let rgb = ColorName::match_prefix(&det.concept).map_or([255, 255, 255], |(c, _)| color_rgb(c));
        let [x1, y1, x2, y2] = det.bbox;
        let px = |v: f64, n: usize| ((v * n as f64).round() as usize).min(n);
        img.fill_rect(px(x1, IMAGE_W), px(y1, IMAGE_H), px(x2, IMAGE_W), px(y2, IMAGE_H), rgb);
    }
    img
}

/// Writes `manifest.jsonl` and `images/*.png` under `dir`.
pub fn write_corpus(dir: &Path, entries: &[CorpusEntry]) -> Result<(), crate::corpus::CorpusError> {
    std::fs::create_dir_all(dir.join("images"))?;
    for e in entries {
        render_entry(e).save(&dir.join(&e.path))?;
    }
    crate::corpus::write_manifest(&dir.join("manifest.jsonl"), entries)
}

// ---------------------------------------------------------------------------
// Dialogues

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Chance a request goes through a vague-request / question / answer exchange.
    pub clarify_prob: f64,
    /// Chance a brightness, contrast or rotation turn gets a cumulative follow-up.
    pub follow_up_prob: f64,
    /// Chance the user acknowledges a result before the next request.
    pub ack_prob: f64,
    /// Distinct command types per dialogue, search first.
    pub turns: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clarify_prob: 0.2,
            follow_up_prob: 0.25,
            ack_prob: 0.5,
            turns: 4,
        }
    }
}

/// A sampled request: what the user says and the command it maps to.
struct Plan {
    lines: Vec<(Speaker, String)>,
    command: Command,
    request_type: RequestType,
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    bank: &'a TemplateBank,
    corpus: &'a Corpus,
    cfg: SynthConfig,
    utterances: Vec<Utterance>,
    commands: Vec<ExecutedCommand>,
    images: Vec<ImageRecord>,
    state: Option<ImageState>,
    /// Color named in the opening search, if any.
    search_color: Option<ColorName>,
}

fn pick<'t>(rng: &mut ChaCha8Rng, options: &'t [String]) -> Option<&'t str> {
    options.choose(rng).map(String::as_str)
}

impl<'a> Builder<'a> {
    fn say(&mut self, speaker: Speaker, text: &str) {
        let u = Utterance::new(speaker, text);
        if !u.tokens.is_empty() {
            self.utterances.push(u);
        }
    }

    fn main_noun(&self) -> String {
        self.state
            .as_ref()
            .and_then(|s| s.record.detections.first())
            .and_then(|d| d.concept.last().cloned())
            .unwrap_or_else(|| "picture".to_string())
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    fn clarified(&mut self, kind: CommandKind, slots: &[(&str, &str)], command: Command) -> Option<Plan> {
        let c = self.bank.clarification(kind)?;
        let vague = fill(pick(&mut self.rng, &c.vague)?, slots);
        let question = fill(pick(&mut self.rng, &c.question)?, slots);
        let answer = fill(pick(&mut self.rng, &c.answer)?, slots);
        Some(Plan {
            lines: vec![(Speaker::User, vague), (Speaker::Assistant, question), (Speaker::User, answer)],
            command,
            request_type: RequestType::ImplReq,
        })
    }

    fn single(&mut self, kind: CommandKind, variant: &str, slots: &[(&str, &str)], command: Command, rt: RequestType) -> Option<Plan> {
        let text = fill(pick(&mut self.rng, self.bank.variant(kind, variant))?, slots);
        Some(Plan {
            lines: vec![(Speaker::User, text)],
            command,
            request_type: rt,
        })
    }

    fn plan_search(&mut self) -> Option<Plan> {
        let entries = self.corpus.entries();
        let entry = &entries[self.rng.gen_range(0..entries.len())];
        let det = entry.detections.first()?;
        let (color, _) = ColorName::match_prefix(&det.concept)?;
        let noun = det.concept.last()?.clone();
        let color_text = color.tokens().join(" ");
        let slots = [("color", color_text.as_str()), ("noun", noun.as_str())];
        let with_color = Command::search(det.concept.iter().cloned()).ok()?;
        if self.chance(self.cfg.clarify_prob) {
            if let Some(p) = self.clarified(CommandKind::Search, &slots, with_color.clone()) {
                self.search_color = Some(color);
                return Some(p);
            }
        }
        if self.chance(0.8) || self.bank.variant(CommandKind::Search, "dir_plain").is_empty() {
            if let Some(p) = self.single(CommandKind::Search, "dir_color", &slots, with_color, RequestType::DirReq) {
                self.search_color = Some(color);
                return Some(p);
            }
        }
        let plain = Command::search([noun.clone()]).ok()?;
        self.single(CommandKind::Search, "dir_plain", &slots, plain, RequestType::DirReq)
    }

    fn plan_color(&mut self) -> Option<Plan> {
        let intensity = Intensity::from_millis(self.rng.gen_range(1..=10) * 100).ok()?;
        let itext = intensity.to_text();
        let roll: f64 = self.rng.gen();
        let others: Vec<Vec<String>> = self
            .state
            .as_ref()
            .map(|s| s.record.detections.iter().skip(1).map(|d| d.concept.clone()).collect())
            .unwrap_or_default();
        if roll < 0.35 && !others.is_empty() {
            let other = others.choose(&mut self.rng)?.clone();
            if let Some((color, _)) = ColorName::match_prefix(&other) {
                let noun = other.last()?.clone();
                let slots = [("other", noun.as_str())];
                if let Some(p) = self.single(CommandKind::Color, "obj_ref", &slots, Command::color(color, intensity), RequestType::ObjRefReq) {
                    return Some(p);
                }
            }
        }
        if roll < 0.5 {
            if let Some(color) = self.search_color {
                if let Some(p) = self.single(CommandKind::Color, "impl", &[], Command::color(color, intensity), RequestType::ImplReq) {
                    return Some(p);
                }
            }
        }
        let color = *ColorName::ALL.choose(&mut self.rng)?;
        let ctext = color.tokens().join(" ");
        let slots = [("color", ctext.as_str()), ("intensity", itext.as_str())];
        let cmd = Command::color(color, intensity);
        if roll < 0.7 {
            if let Some(p) = self.single(CommandKind::Color, "dir_intensity", &slots, cmd.clone(), RequestType::DirReq) {
                return Some(p);
            }
        }
        self.single(CommandKind::Color, "dir", &slots, cmd, RequestType::DirReq)
    }

    fn plan_brightness(&mut self) -> Option<Plan> {
        let magnitude = self.rng.gen_range(1..=12) * 5;
        let up = self.chance(0.6);
        let value = if up { magnitude } else { -magnitude };
        let vtext = magnitude.to_string();
        let slots = [("value", vtext.as_str())];
        let cmd = Command::brightness(value).ok()?;
        if up && self.chance(self.cfg.clarify_prob) {
            if let Some(p) = self.clarified(CommandKind::Brightness, &slots, cmd.clone()) {
                return Some(p);
            }
        }
        let variant = if up { "dir_up" } else { "dir_down" };
        self.single(CommandKind::Brightness, variant, &slots, cmd, RequestType::DirReq)
    }

    fn plan_contrast(&mut self) -> Option<Plan> {
        let value = self.rng.gen_range(1..=12) * 5;
        let vtext = value.to_string();
        let slots = [("value", vtext.as_str())];
        let cmd = Command::contrast(value).ok()?;
        if self.chance(self.cfg.clarify_prob) {
            if let Some(p) = self.clarified(CommandKind::Contrast, &slots, cmd.clone()) {
                return Some(p);
            }
        }
        self.single(CommandKind::Contrast, "dir", &slots, cmd, RequestType::DirReq)
    }

    fn plan_rotation(&mut self) -> Option<Plan> {
        const ANGLES: [i32; 10] = [15, 30, 45, 60, 90, 120, 135, 180, 270, 300];
        let roll: f64 = self.rng.gen();
        if roll < 0.1 {
            let noun = self.main_noun();
            if let Some(p) = self.single(CommandKind::Rotation, "obj_ref", &[("noun", noun.as_str())], Command::rotate(180).ok()?, RequestType::ObjRefReq) {
                return Some(p);
            }
        }
        if roll < 0.2 {
            let (variant, deg) = if self.chance(0.5) { ("impl_180", 180) } else { ("impl_90", 90) };
            if let Some(p) = self.single(CommandKind::Rotation, variant, &[], Command::rotate(deg).ok()?, RequestType::ImplReq) {
                return Some(p);
            }
        }
        let deg = *ANGLES.choose(&mut self.rng)?;
        let vtext = deg.to_string();
        let slots = [("value", vtext.as_str())];
        let cmd = Command::rotate(deg).ok()?;
        if self.chance(self.cfg.clarify_prob) {
            if let Some(p) = self.clarified(CommandKind::Rotation, &slots, cmd.clone()) {
                return Some(p);
            }
        }
        self.single(CommandKind::Rotation, "dir", &slots, cmd, RequestType::DirReq)
    }

    fn plan_cutout(&mut self) -> Option<Plan> {
        if self.chance(0.4) {
            let noun = self.main_noun();
            if let Some(p) = self.single(CommandKind::RemoveBackground, "obj_ref", &[("noun", noun.as_str())], Command::ImageCutout, RequestType::ObjRefReq) {
                return Some(p);
            }
        }
        self.single(CommandKind::RemoveBackground, "dir", &[], Command::ImageCutout, RequestType::DirReq)
    }

    fn plan(&mut self, kind: CommandKind) -> Option<Plan> {
        match kind {
            CommandKind::Search => self.plan_search(),
            CommandKind::Color => self.plan_color(),
            CommandKind::Brightness => self.plan_brightness(),
            CommandKind::Contrast => self.plan_contrast(),
            CommandKind::Rotation => self.plan_rotation(),
            CommandKind::RemoveBackground => self.plan_cutout(),
        }
    }

    /// Cumulative same-type refinement of `prev`, if one fits in range.
    fn follow_up(&mut self, prev: &Command) -> Option<Plan> {
        let (key, cmd, delta) = match *prev {
            Command::AdjustBrightness { value } if value > 0 => {
                let delta = self.rng.gen_range(1..=10) * 5;
                ("brightness", Command::brightness(value + delta).ok()?, delta)
            }
            Command::AdjustBrightness { value } if value < 0 => {
                let delta = self.rng.gen_range(1..=10) * 5;
                ("brightness_down", Command::brightness(value - delta).ok()?, delta)
            }
            Command::AdjustContrast { value } => {
                let delta = self.rng.gen_range(1..=8) * 5;
                ("contrast", Command::contrast(value + delta).ok()?, delta)
            }
            Command::Rotate { degrees } => {
                let delta = *[15, 30, 45, 90].choose(&mut self.rng)?;
                ("rotation", Command::rotate(degrees + delta).ok()?, delta)
            }
            _ => return None,
        };
        let dtext = delta.to_string();
        let text = fill(pick(&mut self.rng, self.bank.follow_ups.get(key)?)?, &[("delta", dtext.as_str())]);
        Some(Plan {
            lines: vec![(Speaker::User, text)],
            command: cmd,
            request_type: RequestType::ImplReq,
        })
    }

    /// Executes the plan's command; on success records the exchange.
    fn commit(&mut self, plan: Plan, kind: CommandKind) -> Result<(), ExecError> {
        let next = execute(&plan.command, self.state.as_ref(), self.corpus)?;
        for (speaker, text) in &plan.lines {
            self.say(*speaker, text);
        }
        let after = self
            .utterances
            .iter()
            .rposition(|u| u.speaker == Speaker::User)
            .expect("plan contains a user line");
        self.commands.push(ExecutedCommand {
            command: plan.command.clone(),
            after_utterance: after,
            request_type: Some(plan.request_type),
        });
        self.images.push(next.record.clone());
        self.state = Some(next);
        let query = match &plan.command {
            Command::Search { query } => query.join(" "),
            _ => String::new(),
        };
        let color = match &plan.command {
            Command::AdjustColor { color, .. } => color.tokens().join(" "),
            _ => String::new(),
        };
        if let Some(t) = self.bank.confirmations.get(kind_key(kind)).and_then(|c| c.choose(&mut self.rng)) {
            let text = fill(t, &[("query", query.as_str()), ("color", color.as_str())]);
            self.say(Speaker::Assistant, &text);
        }
        Ok(())
    }
}

pub fn synthesize_dialogues(seed: u64, n: usize, corpus: &Corpus, templates: &TemplateBank) -> Result<Vec<Dialogue>, SynthError> {
    synthesize_dialogues_with(seed, n, corpus, templates, SynthConfig::default())
}

pub fn synthesize_dialogues_with(seed: u64, n: usize, corpus: &Corpus, templates: &TemplateBank, cfg: SynthConfig) -> Result<Vec<Dialogue>, SynthError> {
    templates.check_coverage()?;
    if corpus.entries().is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let b = Builder {
                rng: ChaCha8Rng::seed_from_u64(seeder.gen()),
                bank: templates,
                corpus,
                cfg,
                utterances: Vec::new(),
                commands: Vec::new(),
                images: Vec::new(),
                state: None,
                search_color: None,
            };
            synthesize_one(b, format!("d{i:05}")).map_err(|e| SynthError::Exec(i, e))
        })
        .collect()
}

fn synthesize_one(mut b: Builder<'_>, id: String) -> Result<Dialogue, ExecError> {
    if let Some(t) = pick(&mut b.rng, &b.bank.greetings.user) {
        let t = t.to_string();
        b.say(Speaker::User, &t);
        if let Some(a) = pick(&mut b.rng, &b.bank.greetings.assistant) {
            let a = a.to_string();
            b.say(Speaker::Assistant, &a);
        }
    }
    // The opening search retries until a plan executes.
    let mut attempts = 0;
    loop {
        let plan = b.plan(CommandKind::Search).ok_or(ExecError::SearchEmpty)?;
        match b.commit(plan, CommandKind::Search) {
            Ok(()) => break,
            Err(e) if attempts >= 20 => return Err(e),
            Err(_) => attempts += 1,
        }
    }
    let mut remaining: Vec<CommandKind> = CommandKind::ALL[1..].to_vec();
    remaining.shuffle(&mut b.rng);
    let mut done = 1;
    while done < b.cfg.turns && !remaining.is_empty() {
        let kind = remaining.remove(0);
        let Some(plan) = b.plan(kind) else { continue };
        let ack = b.chance(b.cfg.ack_prob);
        let ack_text = if ack { pick(&mut b.rng, &b.bank.acknowledgements).map(str::to_string) } else { None };
        let prev = plan.command.clone();
        let before = b.utterances.len();
        if let Some(t) = &ack_text {
            b.say(Speaker::User, t);
        }
        if b.commit(plan, kind).is_err() {
            b.utterances.truncate(before);
            continue;
        }
        done += 1;
        if b.chance(b.cfg.follow_up_prob) {
            if let Some(f) = b.follow_up(&prev) {
                let before = b.utterances.len();
                if b.commit(f, kind).is_err() {
                    b.utterances.truncate(before);
                }
            }
        }
    }
    Ok(Dialogue {
        id,
        utterances: b.utterances,
        commands: b.commands,
        images: b.images,
    })
}
