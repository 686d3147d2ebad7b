use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::loss::{Objective, Prepared};
use super::{
    DeltrModel, FeatureVector, LossRecord, QueryDocs, Standardization, TrainConfig, TrainingSummary,
    MODEL_FORMAT_VERSION, PROTECTED_FEATURE,
};

/// Trains a DELTR model by full-batch gradient descent.
///
/// Every input column (the protected indicator included) is z-scored over
/// the whole training set; the statistics are stored in the model. Weights
/// start uniform in `[-init_scale, init_scale]` drawn from `config.seed`,
/// and each step follows the mean of the per-query gradients. The model's
/// `trajectory` holds the mean losses before the first step and after every
/// step.
pub fn train<S: Scalar>(data: &[QueryDocs<S>], config: &TrainConfig<S>) -> Result<DeltrModel<S>> {
    fit(data, config, Objective::Deltr { gamma: config.gamma })
}

/// Same optimizer as [`train`] with the exposure penalty removed from the
/// objective. The recorded fairness values are still evaluated.
pub fn train_listnet<S: Scalar>(data: &[QueryDocs<S>], config: &TrainConfig<S>) -> Result<DeltrModel<S>> {
    let model = fit(data, config, Objective::ListNet)?;
    Ok(DeltrModel {
        gamma: S::zero(),
        ..model
    })
}

fn feature_names(dimension: usize) -> Vec<String> {
    std::iter::once(PROTECTED_FEATURE.to_string())
        .chain((1..dimension).map(|j| format!("feature_{j}")))
        .collect()
}

fn column_stats<S: Scalar>(data: &[QueryDocs<S>], dimension: usize) -> Vec<Standardization<S>> {
    let rows = || data.iter().flat_map(|q| q.docs.iter().map(FeatureVector::row));
    let n = S::of_usize(data.iter().map(|q| q.docs.len()).sum());
    let mut sums = vec![S::zero(); dimension];
    for row in rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    let means: Vec<S> = sums.into_iter().map(|s| s / n).collect();
    let mut sq = vec![S::zero(); dimension];
    for row in rows() {
        for ((s, v), &m) in sq.iter_mut().zip(row).zip(&means) {
            *s = *s + (v - m) * (v - m);
        }
    }
    means
        .into_iter()
        .zip(sq)
        .map(|(mean, sq)| {
            let sd = (sq / n).sqrt();
            // Constant columns pass through centered.
            let stddev = if sd.is_finite() && sd > S::epsilon() { sd } else { S::one() };
            Standardization { mean, stddev }
        })
        .collect()
}

fn standardized_row<S: Scalar>(doc: &FeatureVector<S>, stats: &[Standardization<S>]) -> Vec<S> {
    doc.row().into_iter().zip(stats).map(|(v, s)| s.apply(v)).collect()
}

fn mean_loss<S: Scalar>(
    prepared: &[Prepared<S>],
    weights: &[S],
    objective: Objective<S>,
    grad: Option<&mut [S]>,
) -> LossRecord<S> {
    let n = S::of_usize(prepared.len());
    let mut relevance = S::zero();
    let mut fairness = S::zero();
    let mut total = S::zero();
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = S::zero());
    }
    // Fixed summation order keeps training bitwise reproducible.
    for q in prepared {
        let parts = q.evaluate(weights, objective, grad.as_deref_mut());
        relevance = relevance + parts.relevance;
        fairness = fairness + parts.fairness;
        total = total + parts.total;
    }
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v = *v / n);
    }
    LossRecord {
        iteration: 0,
        relevance: relevance / n,
        fairness: fairness / n,
        total: total / n,
    }
}

fn fit<S: Scalar>(data: &[QueryDocs<S>], config: &TrainConfig<S>, objective: Objective<S>) -> Result<DeltrModel<S>> {
    config.validate()?;
    let first = data.first().ok_or_else(|| Error::domain("training data is empty"))?;
    let dimension = first.dimension();
    for q in data {
        q.validate()?;
        if q.dimension() != dimension {
            return Err(Error::domain(format!(
                "query `{}` has {} inputs per document, expected {dimension}",
                q.query_id,
                q.dimension()
            )));
        }
    }

    let stats = column_stats(data, dimension);
    let prepared: Vec<Prepared<S>> = data
        .iter()
        .map(|q| {
            Prepared::from_rows(
                q.docs.iter().map(|d| standardized_row(d, &stats)).collect(),
                q.protected_flags(),
                &q.judgments,
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale.as_f64();
    let mut weights: Vec<S> = (0..dimension)
        .map(|_| S::of(rng.random_range(-scale..=scale)))
        .collect();

    let mut grad = vec![S::zero(); dimension];
    let mut trajectory = Vec::with_capacity(config.iterations + 1);
    for iteration in 0..=config.iterations {
        let wants_step = iteration < config.iterations;
        let mut record = mean_loss(&prepared, &weights, objective, wants_step.then_some(&mut grad[..]));
        record.iteration = iteration;
        if !record.total.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingDiverged { iteration });
        }
        trajectory.push(record);
        if wants_step {
            for (w, &g) in weights.iter_mut().zip(&grad) {
                *w = *w - config.learning_rate * g;
            }
        }
    }

    let gamma = match objective {
        Objective::ListNet => S::zero(),
        Objective::Deltr { gamma } => gamma,
    };
    Ok(DeltrModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: feature_names(dimension),
        weights,
        gamma,
        standardization: stats,
        training: Some(TrainingSummary {
            iterations: config.iterations,
            learning_rate: config.learning_rate,
            seed: config.seed,
            init_scale: config.init_scale,
            initial_loss: trajectory[0].total,
            final_loss: trajectory[config.iterations].total,
        }),
        trajectory,
    })
}

/// Model scores and the induced ranking of one document list.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    pub scores: Vec<S>,
    /// Document ids by descending score; equal scores in id order.
    pub ranking: Vec<String>,
}

pub fn predict<S: Scalar>(model: &DeltrModel<S>, docs: &[FeatureVector<S>]) -> Result<Prediction<S>> {
    model.validate()?;
    let scores = docs
        .iter()
        .map(|d| {
            if d.features.len() + 1 != model.dimension() {
                return Err(Error::domain(format!(
                    "document `{}` has {} features, model expects {}",
                    d.doc_id,
                    d.features.len(),
                    model.dimension() - 1
                )));
            }
            Ok(standardized_row(d, &model.standardization)
                .into_iter()
                .zip(&model.weights)
                .map(|(x, &w)| x * w)
                .sum())
        })
        .collect::<Result<Vec<S>>>()?;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| docs[a].doc_id.cmp(&docs[b].doc_id))
    });
    Ok(Prediction {
        ranking: order.into_iter().map(|i| docs[i].doc_id.clone()).collect(),
        scores,
    })
}
