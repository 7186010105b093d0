//! Token vocabulary shared by utterances, concepts and command tokens.

use std::collections::HashMap;

use caise_core::command::{ColorName, KEYWORDS};
use caise_core::TaskInstance;
use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SPECIALS: [&str; 4] = [PAD, UNK, BOS, EOS];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens) {
            v.insert(&t);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    fn insert(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    /// Specials, command keywords and color tokens, then every token of
    /// the instances' utterances, concepts and targets in first-seen order.
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a TaskInstance>) -> Self {
        let mut v = Vocab::from(Vec::new());
        for k in KEYWORDS {
            v.insert(k);
        }
        for c in ColorName::ALL {
            for t in c.tokens() {
                v.insert(t);
            }
        }
        for inst in instances {
            for u in &inst.utterances {
                u.tokens.iter().for_each(|t| v.insert(t));
            }
            for d in inst.images.iter().flat_map(|i| &i.detections) {
                d.concept.iter().for_each(|t| v.insert(t));
            }
            inst.target.to_tokens().iter().for_each(|t| v.insert(t));
        }
        v
    }

    /// [`Vocab::from_instances`] plus every integer argument in
    /// `-100..=360` and intensities in tenths, so the generator can emit
    /// values never seen in training.
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a TaskInstance>) -> Self {
        let mut v = Vocab::from_instances(instances);
        for n in -100..=360 {
            v.insert(&n.to_string());
        }
        for tenth in 0..=10 {
            v.insert(&caise_core::Intensity::from_millis(tenth * 100).expect("in range").to_text());
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id for model input; out-of-vocabulary tokens map to [`UNK_ID`].
    pub fn input_id(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
