#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use fairsearch_service::{router, Engine};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct TestClient {
    pub engine: Arc<Engine>,
}

impl TestClient {
    pub fn new() -> Self {
        Self::with_engine(Engine::in_memory())
    }

    pub fn with_engine(engine: Engine) -> Self {
        Self { engine: Arc::new(engine) }
    }

    pub async fn call(&self, method: Method, uri: &str, body: impl Into<String>) -> (StatusCode, Value) {
        let request = Request::builder()
            .method(method)
            .uri(uri)
            .body(Body::from(body.into()))
            .unwrap();
        let response = router(Arc::clone(&self.engine)).oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn post(&self, uri: &str, body: impl Into<String>) -> (StatusCode, Value) {
        self.call(Method::POST, uri, body).await
    }

    pub async fn ingest(&self, index: &str, docs: &[Value]) {
        let body: String = docs.iter().map(|d| format!("{d}\n")).collect();
        let (status, reply) = self.post(&format!("/{index}/_ingest"), body).await;
        assert_eq!(status, StatusCode::OK, "{reply}");
    }

    pub async fn search(&self, index: &str, body: &Value) -> Value {
        let (status, reply) = self.post(&format!("/{index}/_search"), body.to_string()).await;
        assert_eq!(status, StatusCode::OK, "{reply}");
        reply
    }
}

pub fn hit_ids(response: &Value) -> Vec<String> {
    response["hits"]["hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["_id"].as_str().unwrap().to_string())
        .collect()
}

pub fn hit_scores(response: &Value) -> Vec<f64> {
    response["hits"]["hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["_score"].as_f64().unwrap())
        .collect()
}

/// A document whose `body` has `tf` copies of `term` padded to `len` tokens,
/// so at fixed `len` the BM25 score rises strictly with `tf`.
pub fn doc(id: &str, term: &str, tf: usize, len: usize, gender: &str, extra: Value) -> Value {
    let mut words = vec![term; tf];
    words.resize(len, "filler");
    let mut record = json!({
        "id": id,
        "body": words.join(" "),
        "attributes": {"gender": gender},
    });
    if let Value::Object(extra) = extra {
        record.as_object_mut().unwrap().extend(extra);
    }
    record
}

/// Documents `n` matching `q`, in strictly decreasing baseline order, with
/// gender from `genders` (one char per document: `f` or `m`).
pub fn ranked_corpus(term: &str, genders: &str) -> Vec<Value> {
    let n = genders.len();
    genders
        .chars()
        .enumerate()
        .map(|(i, g)| {
            doc(
                &format!("d{i:02}"),
                term,
                n - i,
                n,
                &g.to_string(),
                json!({"score": (n - i) as f64 / n as f64}),
            )
        })
        .collect()
}

pub fn fair_request(term: &str, size: usize, window: i64, p: f64, alpha: f64) -> Value {
    json!({
        "from": 0,
        "size": size,
        "query": {"match": {"body": term}},
        "rescore": {
            "window_size": window,
            "fair_rescorer": {
                "protected_key": "gender",
                "protected_value": "f",
                "significance_level": alpha,
                "min_proportion_protected": p,
            }
        }
    })
}

pub fn deltr_request(term: &str, size: usize, window: i64, model: &str) -> Value {
    json!({
        "size": size,
        "query": {"match": {"body": term}},
        "rescore": {
            "window_size": window,
            "query": {"rescore_query": {"sltr": {"params": {"keywords": term}, "model": model}}}
        }
    })
}
