//! Index registry, artifact stores and the search pipeline.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use fairsearch_core::deltr::{predict, PROTECTED_FEATURE};
use fairsearch_core::fair::{construct_mtable, fair_rerank, is_fair, mtable_key};
use fairsearch_core::search::{extract_features, parse_ndjson, Document, ScoredHit, SearchIndex};
use fairsearch_core::{Candidate, FairnessParams, MTable};
use serde_json::Value;

use crate::error::{Result, ServiceError};
use crate::store::LogStore;
use crate::wire::{
    FairMetadata, FairRescorer, Hit, Hits, MTableRequest, ModelRecord, Rescorer, SearchRequest, SearchResponse, Sltr,
};

pub const MODELS_LOG: &str = "models.jsonl";
pub const MTABLES_LOG: &str = "mtables.jsonl";

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    /// Directory for the model and MTable logs; `None` keeps them in memory.
    pub storage_dir: Option<PathBuf>,
    /// File holding all indexed documents, loaded on open and rewritten after
    /// each ingest.
    pub index_snapshot: Option<PathBuf>,
}

type SharedIndex = Arc<RwLock<SearchIndex>>;

pub struct Engine {
    indices: RwLock<BTreeMap<String, SharedIndex>>,
    models: LogStore<ModelRecord>,
    mtables: LogStore<MTable>,
    snapshot: Option<PathBuf>,
    snapshot_lock: Mutex<()>,
}

impl Engine {
    pub fn in_memory() -> Self {
        Self {
            indices: RwLock::default(),
            models: LogStore::in_memory(),
            mtables: LogStore::in_memory(),
            snapshot: None,
            snapshot_lock: Mutex::new(()),
        }
    }

    pub fn open(options: &EngineOptions) -> Result<Self> {
        let (models, mtables) = match &options.storage_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                (LogStore::open(dir.join(MODELS_LOG))?, LogStore::open(dir.join(MTABLES_LOG))?)
            }
            None => (LogStore::in_memory(), LogStore::in_memory()),
        };
        let mut indices = BTreeMap::new();
        if let Some(path) = options.index_snapshot.as_deref().filter(|p| p.exists()) {
            for (name, index) in load_snapshot(path)? {
                indices.insert(name, Arc::new(RwLock::new(index)));
            }
        }
        Ok(Self {
            indices: RwLock::new(indices),
            models,
            mtables,
            snapshot: options.index_snapshot.clone(),
            snapshot_lock: Mutex::new(()),
        })
    }

    pub fn index_names(&self) -> Vec<String> {
        self.indices.read().expect("index registry").keys().cloned().collect()
    }

    fn index(&self, name: &str) -> Result<SharedIndex> {
        self.indices
            .read()
            .expect("index registry")
            .get(name)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no such index `{name}`")))
    }

    /// Indexes newline-delimited document records into `index`, creating it
    /// when absent. The batch is applied atomically.
    pub fn ingest(&self, index: &str, ndjson: &str) -> Result<usize> {
        if index.is_empty() || index.starts_with('_') {
            return Err(ServiceError::BadRequest(format!("invalid index name `{index}`")));
        }
        let docs = parse_ndjson(ndjson)?;
        let shared = {
            let mut registry = self.indices.write().expect("index registry");
            Arc::clone(registry.entry(index.to_string()).or_default())
        };
        let count = shared.write().expect("index lock").ingest(docs)?;
        self.write_snapshot()?;
        Ok(count)
    }

    fn write_snapshot(&self) -> Result<()> {
        let Some(path) = &self.snapshot else {
            return Ok(());
        };
        let _guard = self.snapshot_lock.lock().expect("snapshot lock");
        let registry: Vec<(String, SharedIndex)> = self
            .indices
            .read()
            .expect("index registry")
            .iter()
            .map(|(k, v)| (k.clone(), Arc::clone(v)))
            .collect();
        let mut out = serde_json::Map::new();
        for (name, index) in registry {
            let index = index.read().expect("index lock");
            let mut docs: Vec<&Arc<Document>> = index.documents().collect();
            docs.sort_by(|a, b| a.id.cmp(&b.id));
            out.insert(name, Value::Array(docs.iter().map(|d| d.to_record()).collect()));
        }
        let body = serde_json::to_vec(&Value::Object(out)).map_err(std::io::Error::other)?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn upload_model(&self, record: ModelRecord) -> Result<Arc<ModelRecord>> {
        let record = record.normalize()?;
        let name = record.model_name.clone();
        Ok(self.models.put(&name, record)?)
    }

    pub fn model(&self, name: &str) -> Option<Arc<ModelRecord>> {
        self.models.get(name)
    }

    pub fn create_mtable(&self, request: &MTableRequest) -> Result<Arc<MTable>> {
        let params = FairnessParams::new(request.k, request.p, request.alpha)?;
        let table = construct_mtable(params, request.adjust)?;
        Ok(self.mtables.put(&params.key(), table)?)
    }

    pub fn get_mtable(&self, k: usize, p: f64, alpha: f64) -> Option<Arc<MTable>> {
        self.mtables.get(&mtable_key(k, p, alpha))
    }

    fn mtable_for(&self, params: FairnessParams) -> Result<Arc<MTable>> {
        if let Some(table) = self.mtables.get(&params.key()) {
            return Ok(table);
        }
        let table = construct_mtable(params, false)?;
        Ok(self.mtables.put(&params.key(), table)?)
    }

    pub fn search(&self, index: &str, request: &SearchRequest) -> Result<SearchResponse> {
        let started = Instant::now();
        let shared = self.index(index)?;
        let rescore = match &request.rescore {
            Some(r) => Some((r.window()?, r.rescorer()?)),
            None => None,
        };
        let clause = &request.query.match_;
        let hits = shared
            .read()
            .expect("index lock")
            .bm25_search(&clause.text, &clause.field, usize::MAX)?;

        let mut ranked: Vec<(ScoredHit, f64)> = Vec::with_capacity(hits.len());
        let mut fairsearch = None;
        let mut rest = hits;
        if let Some((window_size, rescorer)) = rescore {
            let tail = rest.split_off(window_size.min(rest.len()));
            let window = std::mem::replace(&mut rest, tail);
            if !window.is_empty() {
                match rescorer {
                    Rescorer::Deltr(sltr) => ranked = self.rescore_deltr(sltr, window)?,
                    Rescorer::Fair(fair) => {
                        let (reordered, meta) = self.rescore_fair(fair, window)?;
                        ranked = reordered;
                        fairsearch = Some(meta);
                    }
                }
            }
        }
        let total = ranked.len() + rest.len();
        ranked.extend(rest.into_iter().map(|h| {
            let s = h.baseline_score;
            (h, s)
        }));

        let hits: Vec<Hit> = ranked
            .into_iter()
            .skip(request.from)
            .take(request.size)
            .map(|(h, score)| Hit {
                index: index.to_string(),
                id: h.doc_id,
                score,
                source: h.document.to_record(),
            })
            .collect();
        let max_score = hits.iter().map(|h| h.score).reduce(f64::max);
        Ok(SearchResponse {
            took: started.elapsed().as_millis() as u64,
            hits: Hits { total, max_score, hits },
            fairsearch,
        })
    }

    fn rescore_deltr(&self, sltr: &Sltr, window: Vec<ScoredHit>) -> Result<Vec<(ScoredHit, f64)>> {
        let record = self
            .models
            .get(&sltr.model)
            .ok_or_else(|| ServiceError::NotFound(format!("no such model `{}`", sltr.model)))?;
        let (key, value) = deltr_protected_attribute(sltr, &record)?;
        let extracted = &record.feature_set[1..];
        let docs = window
            .iter()
            .map(|hit| {
                let protected = protected_flag(hit, &key, &value)?;
                Ok(extract_features(hit, extracted, protected)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let prediction = predict(&record.model, &docs)?;
        let score_of: HashMap<&str, f64> = docs
            .iter()
            .zip(&prediction.scores)
            .map(|(d, &s)| (d.doc_id.as_str(), s))
            .collect();
        let mut by_id: HashMap<String, ScoredHit> = window.into_iter().map(|h| (h.doc_id.clone(), h)).collect();
        Ok(prediction
            .ranking
            .iter()
            .map(|id| {
                let hit = by_id.remove(id).expect("prediction ranks window ids");
                (hit, score_of[id.as_str()])
            })
            .collect())
    }

    fn rescore_fair(&self, fair: &FairRescorer, window: Vec<ScoredHit>) -> Result<(Vec<(ScoredHit, f64)>, FairMetadata)> {
        let params = FairnessParams::new(window.len(), fair.min_proportion_protected, fair.significance_level)?;
        let mtable = self.mtable_for(params)?;
        let candidates = window
            .iter()
            .map(|hit| {
                let protected = protected_flag(hit, &fair.protected_key, &fair.protected_value)?;
                Ok(Candidate::new(hit.doc_id.clone(), hit.baseline_score, protected)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let baseline = is_fair(&candidates, &mtable)?;
        let (order, satisfied, violations) = if baseline.fair {
            (candidates, true, Vec::new())
        } else {
            let result = fair_rerank(&candidates, &mtable)?;
            (result.ranking, result.satisfied, result.violations)
        };
        let mut by_id: HashMap<String, ScoredHit> = window.into_iter().map(|h| (h.doc_id.clone(), h)).collect();
        let ranked = order
            .into_iter()
            .map(|c| (by_id.remove(&c.id).expect("rerank keeps window ids"), c.score))
            .collect();
        let meta = FairMetadata {
            protected_key: fair.protected_key.clone(),
            protected_value: fair.protected_value.clone(),
            mtable: (*mtable).clone(),
            baseline_fair: baseline.fair,
            satisfied,
            violations,
        };
        Ok((ranked, meta))
    }
}

/// Request params override the attribute stored with the model.
fn deltr_protected_attribute(sltr: &Sltr, record: &ModelRecord) -> Result<(String, String)> {
    let param = |name: &str| -> Result<Option<String>> {
        match sltr.params.get(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(ServiceError::BadRequest(format!("sltr param `{name}` must be a string, got {other}"))),
        }
    };
    let key = param("protected_key")?.or_else(|| record.protected_key.clone());
    let value = param("protected_value")?.or_else(|| record.protected_value.clone());
    match (key, value) {
        (Some(k), Some(v)) => Ok((k, v)),
        _ => Err(ServiceError::BadRequest(format!(
            "model `{}` needs protected_key and protected_value, from the upload or the sltr params, to fill its `{}` feature",
            record.model_name,
            record.feature_set.first().map(String::as_str).unwrap_or(PROTECTED_FEATURE)
        ))),
    }
}

fn protected_flag(hit: &ScoredHit, key: &str, value: &str) -> Result<bool> {
    hit.document.attribute_matches(key, value).ok_or_else(|| {
        ServiceError::BadRequest(format!("document `{}` has no attribute `{key}`", hit.doc_id))
    })
}

fn load_snapshot(path: &Path) -> Result<Vec<(String, SearchIndex)>> {
    let bad = |msg: String| ServiceError::Storage(std::io::Error::new(std::io::ErrorKind::InvalidData, msg));
    let raw = fs::read(path)?;
    let parsed: BTreeMap<String, Vec<Value>> =
        serde_json::from_slice(&raw).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parsed
        .into_iter()
        .map(|(name, records)| {
            let docs = records
                .into_iter()
                .map(Document::from_record)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{}: index `{name}`: {e}", path.display())))?;
            let mut index = SearchIndex::new();
            index.ingest(docs)?;
            Ok((name, index))
        })
        .collect()
}
