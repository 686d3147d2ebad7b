//! Request and response bodies.

use std::collections::BTreeMap;

use fairsearch_core::{DeltrModel, MTable};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Result, ServiceError};

/// Removes commas that directly precede `}` or `]` outside string literals,
/// so bodies like `{"model": "m",}` parse.
pub fn strip_trailing_commas(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut pending_comma: Option<usize> = None;
    for c in input.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                pending_comma = None;
                in_string = true;
                out.push(c);
            }
            ',' => {
                pending_comma = Some(out.len());
                out.push(c);
            }
            '}' | ']' => {
                if let Some(pos) = pending_comma.take() {
                    out.remove(pos);
                }
                out.push(c);
            }
            c if c.is_whitespace() => out.push(c),
            _ => {
                pending_comma = None;
                out.push(c);
            }
        }
    }
    out
}

pub fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T> {
    serde_json::from_str(&strip_trailing_commas(body))
        .map_err(|e| ServiceError::BadRequest(format!("malformed request body: {e}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default)]
    pub from: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    pub query: QueryClause,
    #[serde(default)]
    pub rescore: Option<Rescore>,
}

fn default_size() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryClause {
    #[serde(rename = "match")]
    pub match_: MatchQuery,
}

/// Single-field match: `{"body": "terms"}` or `{"body": {"query": "terms"}}`.
#[derive(Debug, Clone)]
pub struct MatchQuery {
    pub field: String,
    pub text: String,
}

impl<'de> Deserialize<'de> for MatchQuery {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, Value>::deserialize(d)?;
        if map.len() != 1 {
            return Err(D::Error::custom("match must name exactly one field"));
        }
        let (field, value) = map.into_iter().next().expect("one entry");
        let text = match value {
            Value::String(s) => s,
            Value::Object(mut o) => match o.remove("query") {
                Some(Value::String(s)) => s,
                _ => return Err(D::Error::custom("match field object needs a string `query`")),
            },
            _ => return Err(D::Error::custom("match value must be a string")),
        };
        Ok(MatchQuery { field, text })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rescore {
    pub window_size: i64,
    #[serde(default)]
    pub query: Option<RescoreQuery>,
    #[serde(default)]
    pub fair_rescorer: Option<FairRescorer>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescoreQuery {
    pub rescore_query: RescoreQueryInner,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescoreQueryInner {
    pub sltr: Sltr,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sltr {
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub model: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairRescorer {
    pub protected_key: String,
    pub protected_value: String,
    pub significance_level: f64,
    pub min_proportion_protected: f64,
}

pub enum Rescorer<'a> {
    Deltr(&'a Sltr),
    Fair(&'a FairRescorer),
}

impl Rescore {
    pub fn window(&self) -> Result<usize> {
        if self.window_size < 1 {
            return Err(ServiceError::BadRequest(format!(
                "window_size must be at least 1, got {}",
                self.window_size
            )));
        }
        Ok(self.window_size as usize)
    }

    pub fn rescorer(&self) -> Result<Rescorer<'_>> {
        match (&self.query, &self.fair_rescorer) {
            (Some(q), None) => Ok(Rescorer::Deltr(&q.rescore_query.sltr)),
            (None, Some(f)) => Ok(Rescorer::Fair(f)),
            (Some(_), Some(_)) => Err(ServiceError::BadRequest(
                "rescore takes one rescorer, not both `query` and `fair_rescorer`".into(),
            )),
            (None, None) => Err(ServiceError::BadRequest(
                "rescore needs `query.rescore_query.sltr` or `fair_rescorer`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_name: String,
    #[serde(rename = "type")]
    pub model_type: String,
    pub model: DeltrModel,
    /// Defaults to the model's feature names. The first entry is the
    /// protected indicator slot.
    #[serde(default)]
    pub feature_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_value: Option<String>,
}

pub const MODEL_TYPE: &str = "DELTR";

impl ModelRecord {
    /// Fills defaults and checks the record against its model.
    pub fn normalize(mut self) -> Result<Self> {
        if self.model_name.is_empty() {
            return Err(ServiceError::BadRequest("model_name must be non-empty".into()));
        }
        if self.model_type != MODEL_TYPE {
            return Err(ServiceError::BadRequest(format!(
                "unsupported model type `{}`, expected `{MODEL_TYPE}`",
                self.model_type
            )));
        }
        self.model.validate()?;
        if self.feature_set.is_empty() {
            self.feature_set = self.model.feature_names.clone();
        }
        if self.feature_set.len() != self.model.dimension() {
            return Err(ServiceError::BadRequest(format!(
                "feature_set has {} entries but the model has {} weights",
                self.feature_set.len(),
                self.model.dimension()
            )));
        }
        if self.protected_key.is_some() != self.protected_value.is_some() {
            return Err(ServiceError::BadRequest(
                "protected_key and protected_value must be given together".into(),
            ));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MTableRequest {
    pub k: usize,
    pub p: f64,
    pub alpha: f64,
    #[serde(default)]
    pub adjust: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MTableQuery {
    pub k: usize,
    pub p: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Hit {
    #[serde(rename = "_index")]
    pub index: String,
    #[serde(rename = "_id")]
    pub id: String,
    #[serde(rename = "_score")]
    pub score: f64,
    #[serde(rename = "_source")]
    pub source: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Hits {
    pub total: usize,
    pub max_score: Option<f64>,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FairMetadata {
    pub protected_key: String,
    pub protected_value: String,
    pub mtable: MTable,
    /// Whether the baseline window already passed the test.
    pub baseline_fair: bool,
    pub satisfied: bool,
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResponse {
    pub took: u64,
    pub hits: Hits,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairsearch: Option<FairMetadata>,
}
