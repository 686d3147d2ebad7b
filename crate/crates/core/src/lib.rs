//! Fair ranking primitives.
//!
//! * [`fair`]: the ranked group fairness test, MTables and FA*IR re-ranking.
//! * [`deltr`]: ListNet learning-to-rank with a disparate exposure penalty.
//! * [`search`]: a small BM25 document index used as the retrieval baseline.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod deltr;
pub mod error;
pub mod fair;
pub mod scalar;
pub mod search;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Candidate = fair::Candidate<f64>;
pub type FairnessParams = fair::FairnessParams<f64>;
pub type MTable = fair::MTable<f64>;
pub type ReRankResult = fair::ReRankResult<f64>;

pub type FeatureVector = deltr::FeatureVector<f64>;
pub type QueryDocs = deltr::QueryDocs<f64>;
pub type DeltrModel = deltr::DeltrModel<f64>;
pub type TrainConfig = deltr::TrainConfig<f64>;
pub type TrainingSet = deltr::TrainingSet<f64>;

pub type CandidateF32 = fair::Candidate<f32>;
pub type MTableF32 = fair::MTable<f32>;
pub type DeltrModelF32 = deltr::DeltrModel<f32>;
pub type TrainConfigF32 = deltr::TrainConfig<f32>;
