//! HTTP service for fair re-ranking of BM25 search results.
//!
//! Routes:
//!
//! - `POST /{index}/_ingest` takes newline-delimited document records.
//! - `POST /{index}/_search` runs a single-field match query, optionally
//!   rescored by an uploaded DELTR model (`rescore.query.rescore_query.sltr`)
//!   or by FA*IR (`rescore.fair_rescorer`).
//! - `PUT /_fairsearch/mtable` builds and stores an MTable;
//!   `GET /_fairsearch/mtable?k=&p=&alpha=` fetches one.
//! - `POST /_fairsearch/model` stores a DELTR model record.

pub mod config;
pub mod engine;
pub mod error;
pub mod http;
pub mod store;
pub mod wire;

pub use config::ServiceConfig;
pub use engine::{Engine, EngineOptions};
pub use error::{Result, ServiceError};
pub use http::{router, serve};
