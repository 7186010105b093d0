use std::collections::BTreeMap;

use caise_core::corpus::{CorpusEntry, CorpusError, CorpusIndex, SearchHit};
use caise_core::text::normalize_search_tokens;
use proptest::prelude::*;

const WORDS: [&str; 12] = ["red", "bus", "buses", "glass", "juice", "dog", "cat", "tree", "Blue", "car,", "cars", "sky"];

fn entry(id: usize, caption: Vec<&str>, tags: Vec<&str>) -> CorpusEntry {
    CorpusEntry {
        id: format!("e{id:04}"),
        path: format!("{id}.png").into(),
        caption: caption.join(" "),
        tags: tags.into_iter().map(String::from).collect(),
        detections: vec![],
    }
}

fn corpus() -> impl Strategy<Value = Vec<CorpusEntry>> {
    prop::collection::vec(
        (prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6), prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..2)),
        1..40,
    )
    .prop_map(|v| v.into_iter().enumerate().map(|(i, (c, t))| entry(i, c, t)).collect())
}

/// Linear scan with the same scoring rule.
fn brute_force(entries: &[CorpusEntry], query: &[&str], k: usize) -> Result<Vec<SearchHit>, CorpusError> {
    let mut q = normalize_search_tokens(query);
    q.sort();
    q.dedup();
    let mut hits = Vec::new();
    for e in entries {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in e.search_tokens() {
            *counts.entry(t).or_default() += 1;
        }
        let matched = q.iter().filter(|t| counts.contains_key(*t)).count();
        let total = q.iter().map(|t| counts.get(t).copied().unwrap_or(0)).sum();
        if matched > 0 {
            hits.push(SearchHit { id: e.id.clone(), matched, total });
        }
    }
    if hits.is_empty() {
        return Err(CorpusError::SearchEmpty);
    }
    hits.sort_by(|a, b| b.matched.cmp(&a.matched).then(b.total.cmp(&a.total)).then(a.id.cmp(&b.id)));
    hits.truncate(k);
    Ok(hits)
}

proptest! {
    #[test]
    fn index_equals_brute_force(entries in corpus(), query in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..4), k in 1usize..10) {
        let index = CorpusIndex::build(&entries).unwrap();
        let got = index.search(&query, k);
        let want = brute_force(&entries, &query, k);
        match (got, want) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(CorpusError::SearchEmpty), Err(CorpusError::SearchEmpty)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
        let mut rev = query.clone();
        rev.reverse();
        prop_assert_eq!(index.search(&rev, k).ok(), index.search(&query, k).ok());
    }

    #[test]
    fn rebuilding_is_idempotent(entries in corpus()) {
        prop_assert_eq!(CorpusIndex::build(&entries).unwrap(), CorpusIndex::build(&entries).unwrap());
    }
}

#[test]
fn three_entry_examples() {
    let entries = vec![entry(0, vec!["red", "scooter"], vec![]), entry(1, vec!["blue", "bus"], vec![]), entry(2, vec!["red", "bus"], vec![])];
    let index = CorpusIndex::build(&entries).unwrap();
    assert_eq!(index.posting("red").len(), 2);
    assert_eq!(index.search(&["red", "scooter"], 3).unwrap()[0].id, "e0000");
    assert_eq!(index.search(&["scooters"], 1).unwrap()[0].id, "e0000");
    assert!(matches!(index.search(&["zebra"], 3), Err(CorpusError::SearchEmpty)));
    let mut dup = entries.clone();
    dup.push(entry(0, vec!["x"], vec![]));
    assert!(matches!(CorpusIndex::build(&dup), Err(CorpusError::DuplicateId(_))));
}

#[test]
fn index_persists() {
    let entries = vec![entry(0, vec!["red", "scooter"], vec!["vehicle"]), entry(1, vec!["blue", "bus"], vec![])];
    let index = CorpusIndex::build(&entries).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    assert_eq!(CorpusIndex::load(&path).unwrap(), index);
}
