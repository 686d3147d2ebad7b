//! Two-group synthetic data and the gamma sweep run on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{predict, top_one_probabilities, train, FeatureVector, QueryDocs, TrainConfig, TrainingSet};

/// Name of the single non-protected feature of the synthetic data.
pub const SYNTHETIC_FEATURE: &str = "score";

/// `n` items, half protected, each with one score feature. The advantaged
/// half scores uniformly in `[0.5, 1.0]`, the other half in `[0.0, 0.5)`;
/// `protected_first` makes the protected half the advantaged one.
///
/// Documents are ordered by decreasing score and judged by normalized rank:
/// 1 for the top item down to 0 for the last.
pub fn generate_synthetic<S: Scalar>(n: usize, protected_first: bool, seed: u64) -> Result<TrainingSet<S>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::domain(format!("synthetic size must be even and at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut items: Vec<(bool, f64)> = Vec::with_capacity(n);
    for _ in 0..half {
        items.push((protected_first, rng.random_range(0.5..=1.0)));
    }
    for _ in 0..half {
        items.push((!protected_first, rng.random_range(0.0..0.5)));
    }
    items.sort_by(|a, b| b.1.total_cmp(&a.1));

    let width = (n - 1).to_string().len();
    let docs = items
        .iter()
        .enumerate()
        .map(|(i, &(protected, score))| FeatureVector::new(format!("d{i:0width$}"), protected, vec![S::of(score)]))
        .collect::<Result<Vec<_>>>()?;
    let judgments = (0..n).map(|i| S::of((n - 1 - i) as f64 / (n - 1) as f64)).collect();
    Ok(TrainingSet {
        feature_names: vec![SYNTHETIC_FEATURE.to_string()],
        queries: vec![QueryDocs::new("synthetic", docs, judgments)?],
    })
}

/// Ratio of the ListNet loss to the exposure penalty when the judgments
/// themselves are used as scores. Multiples of it put `gamma * U` on the
/// same scale as the relevance loss. `None` when the penalty is zero there.
pub fn reference_gamma_scale<S: Scalar>(query: &QueryDocs<S>) -> Result<Option<S>> {
    let relevance = super::listnet_loss(&query.judgments, &query.judgments)?;
    let probs = top_one_probabilities(&query.judgments)?;
    let penalty = super::disparate_exposure(&query.protected_flags(), &probs)?;
    Ok((penalty > S::zero()).then(|| relevance / penalty))
}

/// Optimizer settings the gamma sweep uses by default: a step small enough
/// that the penalty stays stable at the largest swept gamma.
pub fn sweep_config<S: Scalar>(seed: u64) -> TrainConfig<S> {
    TrainConfig {
        gamma: S::zero(),
        learning_rate: S::of(0.005),
        iterations: 200_000,
        seed,
        init_scale: S::of(0.01),
    }
}

/// `max(0, exposure(non-protected) - exposure(protected))` of a score list.
pub fn exposure_gap<S: Scalar>(protected_flags: &[bool], scores: &[S]) -> Result<S> {
    let probs = top_one_probabilities(scores)?;
    let e1 = super::exposure(protected_flags, &probs)?;
    let flipped: Vec<bool> = protected_flags.iter().map(|f| !f).collect();
    let e0 = super::exposure(&flipped, &probs)?;
    Ok((e0 - e1).max(S::zero()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow<S> {
    pub gamma: S,
    pub exposure_gap: S,
    /// Mean 1-based predicted rank of the protected items.
    pub avg_position_of_protected: S,
    pub final_loss: S,
    /// Largest fairness term seen along the training trajectory.
    pub max_fairness_loss: S,
    /// Short hash of the predicted ordering.
    pub ranking_fingerprint: String,
    #[serde(skip)]
    pub ranking: Vec<String>,
}

/// FNV-1a over the ordered ids.
fn fingerprint(ids: &[String]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in ids {
        for b in id.bytes().chain(std::iter::once(0u8)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Trains one model per gamma on the same synthetic dataset and reports the
/// resulting exposure gap and protected placement on that dataset.
pub fn run_gamma_experiment<S: Scalar>(
    n: usize,
    gammas: &[S],
    protected_first: bool,
    seed: u64,
    config: &TrainConfig<S>,
) -> Result<Vec<ExperimentRow<S>>> {
    if gammas.is_empty() {
        return Err(Error::domain("gamma list is empty"));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= S::zero())) {
        return Err(Error::domain(format!("gamma must be >= 0, got {g}")));
    }
    let data = generate_synthetic::<S>(n, protected_first, seed)?;
    let query = &data.queries[0];
    let flags = query.protected_flags();

    gammas
        .iter()
        .map(|&gamma| {
            let model = train(&data.queries, &TrainConfig { gamma, ..*config })?;
            let pred = predict(&model, &query.docs)?;
            let protected_ids: std::collections::HashSet<&str> = query
                .docs
                .iter()
                .filter(|d| d.is_protected())
                .map(|d| d.doc_id.as_str())
                .collect();
            let (sum, count) = pred
                .ranking
                .iter()
                .enumerate()
                .filter(|(_, id)| protected_ids.contains(id.as_str()))
                .fold((0usize, 0usize), |(s, c), (i, _)| (s + i + 1, c + 1));
            let avg = if count == 0 { S::zero() } else { S::of_usize(sum) / S::of_usize(count) };
            Ok(ExperimentRow {
                gamma,
                exposure_gap: exposure_gap(&flags, &pred.scores)?,
                avg_position_of_protected: avg,
                final_loss: model.trajectory.last().map_or(S::nan(), |r| r.total),
                max_fairness_loss: model.trajectory.iter().map(|r| r.fairness).fold(S::zero(), S::max),
                ranking_fingerprint: fingerprint(&pred.ranking),
                ranking: pred.ranking,
            })
        })
        .collect()
}
