//! Local image corpus: manifest ingestion and keyword retrieval.
//!
//! Manifest format is JSON Lines, one entry per line:
//!
//! ```text
//! {"id":"c0001","path":"images/c0001.png","caption":"red scooter","tags":["vehicle"],
//!  "detections":[{"bbox":[0.1,0.2,0.6,0.9],"concept":["red","scooter"]}]}
//! ```
//!
//! Ranking: entries are ordered by the number of distinct query tokens they
//! contain, then by the total number of occurrences of those tokens, then by
//! ascending id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{DetectionProvider, DetectionSpec, ObjectDetection};
use crate::image::{ImageError, RasterImage};
use crate::text::{normalize_search_tokens, tokenize};

pub const INDEX_VERSION: &str = "caise-index/1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate corpus id `{0}`")]
    DuplicateId(String),
    #[error("image file for `{id}` not found at {path}")]
    MissingImageFile { id: String, path: PathBuf },
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("manifest line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("no corpus entry matches the query")]
    SearchEmpty,
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("unsupported index version `{0}`")]
    Version(String),
    #[error("unknown corpus id `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    /// Relative to the manifest directory unless absolute.
    pub path: PathBuf,
    pub caption: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub detections: Vec<DetectionSpec>,
}

impl CorpusEntry {
    /// Normalized token multiset used for matching (caption tokens plus tags).
    pub fn search_tokens(&self) -> Vec<String> {
        let mut tokens = normalize_search_tokens(&[self.caption.as_str()]);
        tokens.extend(normalize_search_tokens(&self.tags));
        tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    /// Distinct query tokens present in the entry.
    pub matched: usize,
    /// Occurrences of those tokens in the entry.
    pub total: usize,
}

/// Inverted index over normalized caption/tag tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub version: String,
    /// Entry ids in ascending order; a document number is a position here.
    pub ids: Vec<String>,
    /// Token to ascending document numbers.
    pub postings: BTreeMap<String, Vec<u32>>,
    /// Per-document token multiset.
    pub term_counts: Vec<BTreeMap<String, u32>>,
}

impl CorpusIndex {
    pub fn build(entries: &[CorpusEntry]) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::EmptyManifest);
        }
        let mut order: Vec<&CorpusEntry> = entries.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in order.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CorpusError::DuplicateId(pair[0].id.clone()));
            }
        }
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut term_counts = Vec::with_capacity(order.len());
        for (doc, entry) in order.iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in entry.search_tokens() {
                *counts.entry(token).or_default() += 1;
            }
            for token in counts.keys() {
                postings.entry(token.clone()).or_default().push(doc as u32);
            }
            term_counts.push(counts);
        }
        Ok(CorpusIndex {
            version: INDEX_VERSION.to_string(),
            ids: order.iter().map(|e| e.id.clone()).collect(),
            postings,
            term_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn posting(&self, token: &str) -> &[u32] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Top-`k` entries for `query`, which may be raw words or a phrase.
    pub fn search<S: AsRef<str>>(&self, query: &[S], k: usize) -> Result<Vec<SearchHit>, CorpusError> {
        let distinct: BTreeSet<String> = normalize_search_tokens(query).into_iter().collect();
        if distinct.is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        let mut scores: HashMap<u32, (usize, usize)> = HashMap::new();
        for token in &distinct {
            for &doc in self.posting(token) {
                let count = self.term_counts[doc as usize][token] as usize;
                let s = scores.entry(doc).or_default();
                s.0 += 1;
                s.1 += count;
            }
        }
        if scores.is_empty() {
            return Err(CorpusError::SearchEmpty);
        }
        let mut ranked: Vec<(u32, (usize, usize))> = scores.into_iter().collect();
        // Document numbers follow id order, so ascending doc is ascending id.
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(b.1 .1.cmp(&a.1 .1)).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(doc, (matched, total))| SearchHit {
                id: self.ids[doc as usize].clone(),
                matched,
                total,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let index: CorpusIndex = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if index.version != INDEX_VERSION {
            return Err(CorpusError::Version(index.version));
        }
        Ok(index)
    }
}

/// Reads a JSON Lines manifest. Blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if tokenize(&entry.caption).is_empty() {
            return Err(CorpusError::Schema {
                line: i + 1,
                message: format!("entry `{}` has an empty caption", entry.id),
            });
        }
        for det in &entry.detections {
            crate::detect::validate_box(&det.bbox).map_err(|message| CorpusError::Schema { line: i + 1, message })?;
            if det.concept.is_empty() {
                return Err(CorpusError::Schema {
                    line: i + 1,
                    message: format!("entry `{}` has a detection without concept tokens", entry.id),
                });
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[CorpusEntry]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Where corpus pixels come from.
pub enum ImageStore {
    /// PNG files relative to a root directory.
    Files(PathBuf),
    /// Images rendered on demand from the entry itself.
    Rendered(fn(&CorpusEntry) -> RasterImage),
}

/// An ingested corpus: entries, their index, and a pixel source.
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    by_id: HashMap<String, usize>,
    index: CorpusIndex,
    store: ImageStore,
    feature_dim: usize,
}

impl std::fmt::Debug for Corpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Corpus").field("entries", &self.entries.len()).finish_non_exhaustive()
    }
}

impl Corpus {
    /// Ingests a manifest file; image paths must exist.
    pub fn ingest(manifest: &Path, feature_dim: usize) -> Result<Self, CorpusError> {
        let entries = read_manifest(manifest)?;
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        for e in &entries {
            let path = root.join(&e.path);
            if !path.is_file() {
                return Err(CorpusError::MissingImageFile { id: e.id.clone(), path });
            }
        }
        Corpus::from_entries(entries, ImageStore::Files(root), feature_dim)
    }

    pub fn from_entries(entries: Vec<CorpusEntry>, store: ImageStore, feature_dim: usize) -> Result<Self, CorpusError> {
        let index = CorpusIndex::build(&entries)?;
        let mut entries = entries;
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        let by_id = entries.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        Ok(Corpus {
            entries,
            by_id,
            index,
            store,
            feature_dim,
        })
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn entry(&self, id: &str) -> Option<&CorpusEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn image(&self, id: &str) -> Result<RasterImage, CorpusError> {
        let entry = self.entry(id).ok_or_else(|| CorpusError::UnknownId(id.to_string()))?;
        match &self.store {
            ImageStore::Files(root) => Ok(RasterImage::load(&root.join(&entry.path))?),
            ImageStore::Rendered(render) => Ok(render(entry)),
        }
    }
}

impl DetectionProvider for Corpus {
    fn detections(&self, image_id: &str) -> Vec<ObjectDetection> {
        self.entry(image_id)
            .map(|e| {
                e.detections
                    .iter()
                    .map(|d| d.materialize(image_id, self.feature_dim))
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, caption: &str) -> CorpusEntry {
        CorpusEntry {
            id: id.into(),
            path: format!("{id}.png").into(),
            caption: caption.into(),
            tags: vec![],
            detections: vec![],
        }
    }

    fn three() -> Vec<CorpusEntry> {
        vec![entry("a", "red scooter"), entry("b", "blue bus"), entry("c", "red bus")]
    }

    #[test]
    fn postings_count() {
        let idx = CorpusIndex::build(&three()).unwrap();
        assert_eq!(idx.posting("red"), &[0, 2]);
        assert_eq!(idx.posting("bus"), &[1, 2]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut es = three();
        es.push(entry("b", "green car"));
        assert!(matches!(CorpusIndex::build(&es), Err(CorpusError::DuplicateId(id)) if id == "b"));
        assert!(matches!(CorpusIndex::build(&[]), Err(CorpusError::EmptyManifest)));
    }

    #[test]
    fn ranking_prefers_full_coverage() {
        let idx = CorpusIndex::build(&three()).unwrap();
        let hits = idx.search(&["red", "scooter"], 10).unwrap();
        assert_eq!(hits[0].id, "a");
        assert_eq!(hits[0].matched, 2);
        assert_eq!(hits[1].id, "c");
        assert!(matches!(idx.search(&["zebra"], 3), Err(CorpusError::SearchEmpty)));
    }

    #[test]
    fn plural_query_matches_singular_caption() {
        let idx = CorpusIndex::build(&three()).unwrap();
        assert_eq!(idx.search(&["scooters"], 1).unwrap()[0].id, "a");
    }

    #[test]
    fn manifest_schema_errors_carry_line() {
        let text = "{\"id\":\"a\",\"path\":\"a.png\",\"caption\":\"x\"}\n{\"id\":\"b\"}\n";
        match parse_manifest(text) {
            Err(CorpusError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_image_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.jsonl");
        write_manifest(&manifest, &three()).unwrap();
        assert!(matches!(Corpus::ingest(&manifest, 8), Err(CorpusError::MissingImageFile { .. })));
    }
}
