//! In-memory document store with BM25 retrieval.
//!
//! Scores use `k1 = 1.2`, `b = 0.75` and
//! `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`, where `N`, `df` and the
//! average length are taken over the documents that have the searched field.
//! The virtual field [`ALL_FIELD`] concatenates every text field.

mod document;

pub use document::{parse_ndjson, Document};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::deltr::FeatureVector;
use crate::error::{Error, Result};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Field covering all text fields of a document.
pub const ALL_FIELD: &str = "_all";

/// Feature name resolving to the hit's BM25 score.
pub const BASELINE_SCORE_FEATURE: &str = "baseline_score";

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHit {
    pub doc_id: String,
    pub baseline_score: f64,
    pub document: Arc<Document>,
}

#[derive(Debug, Clone, Default)]
struct FieldIndex {
    postings: HashMap<String, HashMap<String, u32>>,
    lengths: HashMap<String, usize>,
    total_len: usize,
}

impl FieldIndex {
    fn add(&mut self, doc_id: &str, tokens: &[String]) {
        for t in tokens {
            *self
                .postings
                .entry(t.clone())
                .or_default()
                .entry(doc_id.to_string())
                .or_insert(0) += 1;
        }
        self.lengths.insert(doc_id.to_string(), tokens.len());
        self.total_len += tokens.len();
    }

    fn remove(&mut self, doc_id: &str, tokens: &[String]) {
        let unique: HashSet<&String> = tokens.iter().collect();
        for t in unique {
            if let Some(docs) = self.postings.get_mut(t) {
                docs.remove(doc_id);
                if docs.is_empty() {
                    self.postings.remove(t);
                }
            }
        }
        if let Some(len) = self.lengths.remove(doc_id) {
            self.total_len -= len;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    docs: BTreeMap<String, Arc<Document>>,
    fields: HashMap<String, FieldIndex>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Document>> {
        self.docs.get(id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Arc<Document>> {
        self.docs.values()
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.fields.get(field).is_some_and(|f| !f.lengths.is_empty())
    }

    /// Adds a batch. Ids must be unique within the batch; an id already in
    /// the index is replaced. Nothing is applied if the batch is invalid.
    pub fn ingest(&mut self, batch: Vec<Document>) -> Result<usize> {
        let mut seen = HashSet::with_capacity(batch.len());
        for d in &batch {
            d.validate()?;
            if !seen.insert(d.id.as_str()) {
                return Err(Error::domain(format!("duplicate document id `{}` in batch", d.id)));
            }
        }
        let count = batch.len();
        for doc in batch {
            if let Some(old) = self.docs.remove(&doc.id) {
                for (field, tokens) in old.field_tokens() {
                    if let Some(index) = self.fields.get_mut(&field) {
                        index.remove(&old.id, &tokens);
                    }
                }
            }
            for (field, tokens) in doc.field_tokens() {
                self.fields.entry(field).or_default().add(&doc.id, &tokens);
            }
            self.docs.insert(doc.id.clone(), Arc::new(doc));
        }
        Ok(count)
    }

    /// Parses newline-delimited records and ingests them as one batch.
    pub fn ingest_ndjson(&mut self, input: &str) -> Result<usize> {
        self.ingest(parse_ndjson(input)?)
    }

    /// Top-`n` documents for `query_text` on `field` by BM25; documents
    /// matching no query term are not returned. Equal scores are ordered by id.
    pub fn bm25_search(&self, query_text: &str, field: &str, n: usize) -> Result<Vec<ScoredHit>> {
        if n == 0 {
            return Err(Error::domain("result size must be at least 1"));
        }
        let mut terms = tokenize(query_text);
        if terms.is_empty() {
            return Err(Error::domain("query has no searchable terms"));
        }
        let mut seen = HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));

        let index = match self.fields.get(field) {
            Some(index) if !index.lengths.is_empty() => index,
            _ => return Err(Error::domain(format!("no document has field `{field}`"))),
        };
        let doc_count = index.lengths.len() as f64;
        let avgdl = index.total_len as f64 / doc_count;

        let mut scores: HashMap<&str, f64> = HashMap::new();
        for term in &terms {
            let Some(postings) = index.postings.get(term) else {
                continue;
            };
            let df = postings.len() as f64;
            let idf = (1.0 + (doc_count - df + 0.5) / (df + 0.5)).ln();
            for (doc_id, &tf) in postings {
                let tf = f64::from(tf);
                let dl = index.lengths[doc_id] as f64;
                let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
                let s = idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm));
                *scores.entry(doc_id.as_str()).or_insert(0.0) += s;
            }
        }

        let mut hits: Vec<(&str, f64)> = scores.into_iter().collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        hits.truncate(n);
        Ok(hits
            .into_iter()
            .map(|(id, score)| ScoredHit {
                doc_id: id.to_string(),
                baseline_score: score,
                document: Arc::clone(&self.docs[id]),
            })
            .collect())
    }
}

/// Builds the model input for a hit: each name in `feature_set` is either
/// [`BASELINE_SCORE_FEATURE`] or a numeric field of the document. The
/// protected indicator comes from the caller, not from `feature_set`.
pub fn extract_features(hit: &ScoredHit, feature_set: &[String], protected: bool) -> Result<FeatureVector<f64>> {
    let features = feature_set
        .iter()
        .map(|name| {
            if name == BASELINE_SCORE_FEATURE {
                Ok(hit.baseline_score)
            } else {
                hit.document
                    .numeric_fields
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::FeatureExtraction {
                        doc_id: hit.doc_id.clone(),
                        field: name.clone(),
                    })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    FeatureVector::new(hit.doc_id.clone(), protected, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn index(lines: &str) -> SearchIndex {
        let mut idx = SearchIndex::new();
        idx.ingest_ndjson(lines).unwrap();
        idx
    }

    fn ids(hits: &[ScoredHit]) -> Vec<&str> {
        hits.iter().map(|h| h.doc_id.as_str()).collect()
    }

    #[test]
    fn tokenizer_folds_and_splits() {
        assert_eq!(tokenize("Jon Snow, jon-SNOW!  x2"), ["jon", "snow", "jon", "snow", "x2"]);
        assert!(tokenize(" ,.; ").is_empty());
    }

    #[test]
    fn term_containment() {
        let idx = index("{\"id\":\"d1\",\"text\":\"jon snow\"}\n{\"id\":\"d2\",\"text\":\"arya stark\"}\n");
        assert_eq!(ids(&idx.bm25_search("jon", "text", 10).unwrap()), ["d1"]);
        assert!(idx.bm25_search("tyrion", "text", 10).unwrap().is_empty());
    }

    #[test]
    fn single_document_score() {
        let idx = index("{\"id\":\"d1\",\"text\":\"jon jon\"}\n");
        let hits = idx.bm25_search("jon", "text", 1).unwrap();
        let hand = (4.0f64 / 3.0).ln() * 1.375;
        assert_abs_diff_eq!(hand, 0.3956, epsilon = 1e-3);
        assert_abs_diff_eq!(hits[0].baseline_score, hand, epsilon = 1e-12);
    }

    #[test]
    fn all_field_spans_text_fields() {
        let idx = index("{\"id\":\"a\",\"title\":\"Jon\",\"body\":\"the north\"}\n{\"id\":\"b\",\"title\":\"Arya\",\"body\":\"jon\"}\n");
        assert_eq!(ids(&idx.bm25_search("jon", ALL_FIELD, 10).unwrap()).len(), 2);
        assert_eq!(ids(&idx.bm25_search("jon", "title", 10).unwrap()), ["a"]);
        assert!(idx.bm25_search("jon", "missing", 10).is_err());
    }

    #[test]
    fn search_errors() {
        let idx = index("{\"id\":\"d1\",\"text\":\"jon\"}\n");
        assert!(idx.bm25_search("", "text", 3).is_err());
        assert!(idx.bm25_search("?!", "text", 3).is_err());
        assert!(idx.bm25_search("jon", "text", 0).is_err());
    }

    #[test]
    fn ties_break_by_id_and_results_truncate() {
        let idx = index("{\"id\":\"c\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\"x\"}\n");
        assert_eq!(ids(&idx.bm25_search("x", "text", 2).unwrap()), ["a", "b"]);
    }

    #[test]
    fn ingest_counts_and_rejects() {
        let mut idx = SearchIndex::new();
        assert_eq!(idx.ingest_ndjson("").unwrap(), 0);
        assert_eq!(
            idx.ingest_ndjson("{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"b\"}\n{\"id\":\"3\",\"text\":\"c\"}").unwrap(),
            3
        );
        assert!(matches!(
            idx.ingest_ndjson("{\"id\":\"4\",\"text\":\"a\"}\n{\"text\":\"b\"}\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(idx.ingest_ndjson("{\"id\":\"5\",\"text\":\"a\"}\n{\"id\":\"5\",\"text\":\"b\"}\n").is_err());
        // Failed batches leave the index untouched.
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn reingest_replaces() {
        let mut idx = index("{\"id\":\"d1\",\"text\":\"jon snow\"}\n{\"id\":\"d2\",\"text\":\"arya\"}\n");
        idx.ingest_ndjson("{\"id\":\"d1\",\"text\":\"sansa\"}\n").unwrap();
        assert_eq!(idx.len(), 2);
        assert!(idx.bm25_search("jon", "text", 10).unwrap().is_empty());
        assert_eq!(ids(&idx.bm25_search("sansa", "text", 10).unwrap()), ["d1"]);
    }

    #[test]
    fn feature_extraction() {
        let idx = index("{\"id\":\"d1\",\"text\":\"jon\",\"salary\":3.0}\n");
        let hit = idx.bm25_search("jon", "text", 1).unwrap().remove(0);
        let fv = extract_features(&hit, &["baseline_score".into()], false).unwrap();
        assert_eq!(fv.features, vec![hit.baseline_score]);
        let fv = extract_features(&hit, &["baseline_score".into(), "salary".into()], true).unwrap();
        assert_eq!(fv.features, vec![hit.baseline_score, 3.0]);
        assert!(fv.is_protected());
        match extract_features(&hit, &["age".into()], false) {
            Err(Error::FeatureExtraction { doc_id, field }) => assert_eq!((doc_id.as_str(), field.as_str()), ("d1", "age")),
            other => panic!("{other:?}"),
        }
    }

    fn arb_docs() -> impl Strategy<Value = Vec<(u8, Vec<u8>)>> {
        prop::collection::vec((0u8..12, prop::collection::vec(0u8..6, 1..8)), 1..30)
    }

    fn to_doc(id: u8, words: &[u8]) -> Document {
        let text: Vec<String> = words.iter().map(|w| format!("w{w}")).collect();
        Document::with_text(format!("d{id:02}"), text.join(" "))
    }

    proptest! {
        #[test]
        fn incremental_index_matches_rebuild(batches in prop::collection::vec(arb_docs(), 1..4), query in prop::collection::vec(0u8..7, 1..4)) {
            let mut incremental = SearchIndex::new();
            let mut latest: BTreeMap<String, Document> = BTreeMap::new();
            for batch in &batches {
                let mut docs: BTreeMap<u8, Document> = BTreeMap::new();
                for (id, words) in batch {
                    docs.insert(*id, to_doc(*id, words));
                }
                for d in docs.values() {
                    latest.insert(d.id.clone(), d.clone());
                }
                incremental.ingest(docs.into_values().collect()).unwrap();
            }
            let mut rebuilt = SearchIndex::new();
            rebuilt.ingest(latest.into_values().collect()).unwrap();

            let q: Vec<String> = query.iter().map(|w| format!("w{w}")).collect();
            let q = q.join(" ");
            let a = incremental.bm25_search(&q, "text", 100).unwrap();
            let b = rebuilt.bm25_search(&q, "text", 100).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.doc_id, &y.doc_id);
                prop_assert_eq!(x.baseline_score, y.baseline_score);
            }
            for w in a.windows(2) {
                prop_assert!(w[0].baseline_score >= w[1].baseline_score);
            }
            // Any document containing a query term is retrievable.
            for d in rebuilt.documents() {
                let toks = tokenize(&d.text_fields["text"]);
                if query.iter().any(|w| toks.contains(&format!("w{w}"))) {
                    prop_assert!(a.iter().any(|h| h.doc_id == d.id));
                }
            }
        }
    }
}
