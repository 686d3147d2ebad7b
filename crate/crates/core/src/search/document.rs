use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{tokenize, ALL_FIELD};
use crate::error::{Error, Result};

/// A stored document.
///
/// In its record form (one JSON object per line) `id` is required, string
/// members are text fields, numeric members are numeric fields, and the
/// optional `attributes` object holds exact-match string attributes such as
/// `"gender": "f"`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub id: String,
    pub text_fields: BTreeMap<String, String>,
    pub numeric_fields: BTreeMap<String, f64>,
    pub attributes: BTreeMap<String, String>,
}

impl Document {
    pub fn with_text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text_fields: BTreeMap::from([("text".to_string(), text.into())]),
            ..Self::default()
        }
    }

    /// `None` when the document has no attribute `key`.
    pub fn attribute_matches(&self, key: &str, value: &str) -> Option<bool> {
        self.attributes.get(key).map(|v| v == value)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::domain("document id must be non-empty"));
        }
        let names = self
            .text_fields
            .keys()
            .chain(self.numeric_fields.keys())
            .chain(self.attributes.keys());
        for name in names {
            if name.is_empty() {
                return Err(Error::domain(format!("document `{}` has an empty field name", self.id)));
            }
        }
        if let Some((name, _)) = self.numeric_fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::domain(format!("document `{}`: field `{name}` is not finite", self.id)));
        }
        Ok(())
    }

    /// Tokens per indexed field, including the virtual all-text field.
    pub(crate) fn field_tokens(&self) -> Vec<(String, Vec<String>)> {
        let mut out: Vec<(String, Vec<String>)> = self
            .text_fields
            .iter()
            .map(|(name, text)| (name.clone(), tokenize(text)))
            .collect();
        let all = out.iter().flat_map(|(_, t)| t.iter().cloned()).collect();
        out.push((ALL_FIELD.to_string(), all));
        out
    }

    pub fn to_record(&self) -> Value {
        let mut map = Map::new();
        map.insert("id".into(), Value::String(self.id.clone()));
        for (k, v) in &self.text_fields {
            map.insert(k.clone(), Value::String(v.clone()));
        }
        for (k, v) in &self.numeric_fields {
            map.insert(k.clone(), serde_json::json!(v));
        }
        if !self.attributes.is_empty() {
            let attrs = self
                .attributes
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect();
            map.insert("attributes".into(), Value::Object(attrs));
        }
        Value::Object(map)
    }

    pub fn from_record(value: Value) -> std::result::Result<Self, String> {
        let Value::Object(map) = value else {
            return Err("document record must be a JSON object".into());
        };
        let mut doc = Document::default();
        let mut id = None;
        for (key, value) in map {
            match (key.as_str(), value) {
                ("id", Value::String(s)) => id = Some(s),
                ("id", Value::Number(n)) => id = Some(n.to_string()),
                ("id", _) => return Err("`id` must be a string".into()),
                ("attributes", Value::Object(attrs)) => {
                    for (k, v) in attrs {
                        let v = match v {
                            Value::String(s) => s,
                            Value::Number(n) => n.to_string(),
                            Value::Bool(b) => b.to_string(),
                            _ => return Err(format!("attribute `{k}` must be a scalar")),
                        };
                        doc.attributes.insert(k, v);
                    }
                }
                ("attributes", _) => return Err("`attributes` must be an object".into()),
                (_, Value::String(s)) => {
                    doc.text_fields.insert(key, s);
                }
                (_, Value::Number(n)) => {
                    let v = n.as_f64().ok_or_else(|| format!("field `{key}` is not a finite number"))?;
                    doc.numeric_fields.insert(key, v);
                }
                (_, _) => return Err(format!("field `{key}` must be a string or a number")),
            }
        }
        doc.id = id.ok_or("record is missing `id`")?;
        doc.validate().map_err(|e| e.to_string())?;
        Ok(doc)
    }
}

impl Serialize for Document {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Document::from_record(Value::deserialize(de)?).map_err(serde::de::Error::custom)
    }
}

/// One record per non-blank line. Errors carry the 1-based line number.
pub fn parse_ndjson(input: &str) -> Result<Vec<Document>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let value: Value = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            Document::from_record(value).map_err(|e| Error::parse(i + 1, e))
        })
        .collect()
}
