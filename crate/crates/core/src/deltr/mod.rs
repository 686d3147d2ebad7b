//! DELTR: ListNet learning-to-rank with a disparate exposure penalty.
//!
//! The ranking function is linear, `f(x) = w . x`, where the first component
//! of `x` is the protected-group indicator. Training minimizes
//! `L(y, f) + gamma * U(f)` where `L` is the ListNet top-one cross entropy and
//! `U` is the squared, one-sided gap between the non-protected and the
//! protected group's mean top-one probability.

mod data;
mod experiment;
mod loss;
mod train;

pub use data::{read_training_csv, write_training_csv, TrainingSet};
pub use experiment::{
    exposure_gap, generate_synthetic, reference_gamma_scale, run_gamma_experiment, sweep_config, ExperimentRow,
    SYNTHETIC_FEATURE,
};
pub use loss::{
    deltr_gradient, deltr_loss, disparate_exposure, exposure, listnet_gradient, listnet_loss, top_one_probabilities,
    LossParts,
};
pub use train::{predict, train, train_listnet, Prediction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Name of the model's first feature, the protected-group indicator.
pub const PROTECTED_FEATURE: &str = "protected";

/// Current version of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Features of one document for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<S> {
    pub doc_id: String,
    /// 1 for members of the protected group, 0 otherwise.
    pub protected: S,
    pub features: Vec<S>,
}

impl<S: Scalar> FeatureVector<S> {
    pub fn new(doc_id: impl Into<String>, protected: bool, features: Vec<S>) -> Result<Self> {
        let fv = Self {
            doc_id: doc_id.into(),
            protected: if protected { S::one() } else { S::zero() },
            features,
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn is_protected(&self) -> bool {
        self.protected == S::one()
    }

    /// Model input row: the protected indicator followed by the features.
    pub fn row(&self) -> Vec<S> {
        std::iter::once(self.protected).chain(self.features.iter().copied()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.protected != S::zero() && self.protected != S::one() {
            return Err(Error::domain(format!(
                "document `{}`: protected indicator must be 0 or 1",
                self.doc_id
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("document `{}` has a non-finite feature", self.doc_id)));
        }
        Ok(())
    }
}

/// One training query: its documents and their relevance judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDocs<S> {
    pub query_id: String,
    pub docs: Vec<FeatureVector<S>>,
    pub judgments: Vec<S>,
}

impl<S: Scalar> QueryDocs<S> {
    pub fn new(query_id: impl Into<String>, docs: Vec<FeatureVector<S>>, judgments: Vec<S>) -> Result<Self> {
        let q = Self {
            query_id: query_id.into(),
            docs,
            judgments,
        };
        q.validate()?;
        Ok(q)
    }

    /// Number of model inputs per document, protected indicator included.
    pub fn dimension(&self) -> usize {
        self.docs.first().map_or(1, |d| d.features.len() + 1)
    }

    pub fn protected_flags(&self) -> Vec<bool> {
        self.docs.iter().map(FeatureVector::is_protected).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.docs.len() != self.judgments.len() {
            return Err(Error::domain(format!(
                "query `{}`: {} documents but {} judgments",
                self.query_id,
                self.docs.len(),
                self.judgments.len()
            )));
        }
        if self.docs.len() < 2 {
            return Err(Error::domain(format!(
                "query `{}` needs at least two documents",
                self.query_id
            )));
        }
        let dim = self.docs[0].features.len();
        for d in &self.docs {
            d.validate()?;
            if d.features.len() != dim {
                return Err(Error::domain(format!(
                    "query `{}`: document `{}` has {} features, expected {dim}",
                    self.query_id,
                    d.doc_id,
                    d.features.len()
                )));
            }
        }
        if self.judgments.iter().any(|j| !j.is_finite()) {
            return Err(Error::domain(format!("query `{}` has a non-finite judgment", self.query_id)));
        }
        Ok(())
    }
}

/// Column statistics applied before the dot product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization<S> {
    pub mean: S,
    pub stddev: S,
}

impl<S: Scalar> Standardization<S> {
    pub fn identity() -> Self {
        Self {
            mean: S::zero(),
            stddev: S::one(),
        }
    }

    #[inline]
    pub fn apply(&self, v: S) -> S {
        (v - self.mean) / self.stddev
    }
}

/// Loss values at one point of the training trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord<S> {
    pub iteration: usize,
    pub relevance: S,
    pub fairness: S,
    pub total: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary<S> {
    pub iterations: usize,
    pub learning_rate: S,
    pub seed: u64,
    pub init_scale: S,
    pub initial_loss: S,
    pub final_loss: S,
}

/// A trained linear ranking model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DeltrModel<S: Scalar> {
    pub format_version: u32,
    /// Input names; the first is always [`PROTECTED_FEATURE`].
    pub feature_names: Vec<String>,
    pub weights: Vec<S>,
    pub gamma: S,
    pub standardization: Vec<Standardization<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary<S>>,
    /// Per-iteration losses; kept in memory only.
    #[serde(skip)]
    pub trajectory: Vec<LossRecord<S>>,
}

impl<S: Scalar> DeltrModel<S> {
    /// A model with explicit weights and no standardization.
    pub fn from_weights(feature_names: Vec<String>, weights: Vec<S>, gamma: S) -> Result<Self> {
        let model = Self {
            format_version: MODEL_FORMAT_VERSION,
            standardization: vec![Standardization::identity(); weights.len()],
            feature_names,
            weights,
            gamma,
            training: None,
            trajectory: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::domain(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        if self.weights.is_empty() {
            return Err(Error::domain("model has no weights"));
        }
        if self.weights.len() != self.feature_names.len() {
            return Err(Error::domain(format!(
                "model has {} weights but {} feature names",
                self.weights.len(),
                self.feature_names.len()
            )));
        }
        if self.standardization.len() != self.weights.len() {
            return Err(Error::domain("standardization does not match the weight count"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("model weights must be finite"));
        }
        if self
            .standardization
            .iter()
            .any(|s| !s.mean.is_finite() || !(s.stddev.is_finite() && s.stddev > S::zero()))
        {
            return Err(Error::domain("standardization needs finite means and positive deviations"));
        }
        if !(self.gamma.is_finite() && self.gamma >= S::zero()) {
            return Err(Error::domain("gamma must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    pub gamma: S,
    pub learning_rate: S,
    pub iterations: usize,
    pub seed: u64,
    pub init_scale: S,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        Self {
            gamma: S::zero(),
            learning_rate: S::of(0.5),
            iterations: 500,
            seed: 42,
            init_scale: S::of(0.01),
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= S::zero()) {
            return Err(Error::domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > S::zero()) {
            return Err(Error::domain(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::domain("iterations must be at least 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale > S::zero()) {
            return Err(Error::domain(format!("init scale must be > 0, got {}", self.init_scale)));
        }
        Ok(())
    }
}

impl<S: Scalar> DeltrModel<S> {
    /// Replaces the input names, e.g. with the column names of a training file.
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        self.feature_names = names;
        self.validate()?;
        Ok(self)
    }
}
