use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::QueryDocs;

/// Listwise top-one probabilities: `softmax(scores)`, shifted by the maximum.
pub fn top_one_probabilities<S: Scalar>(scores: &[S]) -> Result<Vec<S>> {
    if scores.is_empty() {
        return Err(Error::domain("top_one_probabilities: empty score list"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("top_one_probabilities: non-finite score"));
    }
    Ok(softmax(scores))
}

fn softmax<S: Scalar>(scores: &[S]) -> Vec<S> {
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax<S: Scalar>(scores: &[S]) -> Vec<S> {
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let log_sum = scores.iter().map(|&s| (s - max).exp()).sum::<S>().ln();
    scores.iter().map(|&s| s - max - log_sum).collect()
}

/// Mean top-one probability of the members of a group; 0 for an empty group.
pub fn exposure<S: Scalar>(group_member_flags: &[bool], top_probs: &[S]) -> Result<S> {
    check_lengths(group_member_flags.len(), top_probs.len())?;
    Ok(group_exposure(group_member_flags, top_probs, true).0)
}

/// `(mean, size, sum)` of the probabilities whose flag equals `member`.
fn group_exposure<S: Scalar>(flags: &[bool], probs: &[S], member: bool) -> (S, usize, S) {
    let (n, sum) = flags
        .iter()
        .zip(probs)
        .filter(|(&f, _)| f == member)
        .fold((0usize, S::zero()), |(n, s), (_, &p)| (n + 1, s + p));
    if n == 0 {
        (S::zero(), 0, S::zero())
    } else {
        (sum / S::of_usize(n), n, sum)
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::domain(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `max(0, exposure(non-protected) - exposure(protected))^2`.
pub fn disparate_exposure<S: Scalar>(protected_flags: &[bool], top_probs: &[S]) -> Result<S> {
    check_lengths(protected_flags.len(), top_probs.len())?;
    Ok(fairness_term(protected_flags, top_probs, None))
}

/// Value of the exposure penalty; when `grad` is given, adds
/// `scale * dU/ds` into it. The clamp boundary gets subgradient 0.
fn fairness_term<S: Scalar>(flags: &[bool], probs: &[S], grad: Option<(S, &mut [S])>) -> S {
    let (e1, n1, sum1) = group_exposure(flags, probs, true);
    let (e0, n0, sum0) = group_exposure(flags, probs, false);
    let gap = e0 - e1;
    if gap <= S::zero() {
        return S::zero();
    }
    if let Some((scale, grad)) = grad {
        let two_gap = S::of(2.0) * gap * scale;
        for (i, (&p, &is_protected)) in probs.iter().zip(flags).enumerate() {
            // d(mean_g)/ds_i = p_i * ([i in g] - sum_g) / |g|
            let mut d = S::zero();
            if n0 > 0 {
                let member = if is_protected { S::zero() } else { S::one() };
                d = d + p * (member - sum0) / S::of_usize(n0);
            }
            if n1 > 0 {
                let member = if is_protected { S::one() } else { S::zero() };
                d = d - p * (member - sum1) / S::of_usize(n1);
            }
            grad[i] = grad[i] + two_gap * d;
        }
    }
    gap * gap
}

/// ListNet cross entropy between the top-one distributions of the
/// judgments and of the predicted scores.
pub fn listnet_loss<S: Scalar>(judgments: &[S], predicted_scores: &[S]) -> Result<S> {
    check_lengths(judgments.len(), predicted_scores.len())?;
    let target = top_one_probabilities(judgments)?;
    top_one_probabilities(predicted_scores)?;
    Ok(cross_entropy(&target, predicted_scores, None))
}

/// `-sum t_i log softmax(s)_i`; when `grad` is given, writes `softmax(s) - t`
/// into it. Returns the loss.
fn cross_entropy<S: Scalar>(target: &[S], scores: &[S], grad: Option<&mut [S]>) -> S {
    let log_p = log_softmax(scores);
    let loss = -target.iter().zip(&log_p).map(|(&t, &lp)| t * lp).sum::<S>();
    if let Some(grad) = grad {
        for ((g, &lp), &t) in grad.iter_mut().zip(&log_p).zip(target) {
            *g = lp.exp() - t;
        }
    }
    loss
}

/// Loss decomposition `total = relevance + gamma * fairness`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts<S> {
    pub total: S,
    pub relevance: S,
    pub fairness: S,
}

/// DELTR loss of `model_scores` on one query.
pub fn deltr_loss<S: Scalar>(query: &QueryDocs<S>, model_scores: &[S], gamma: S) -> Result<LossParts<S>> {
    query.validate()?;
    check_lengths(query.docs.len(), model_scores.len())?;
    let prepared = Prepared::from_query(query)?;
    let probs = top_one_probabilities(model_scores)?;
    let relevance = cross_entropy(&prepared.target, model_scores, None);
    let fairness = fairness_term(&prepared.flags, &probs, None);
    Ok(LossParts {
        total: relevance + gamma * fairness,
        relevance,
        fairness,
    })
}

/// Gradient of the DELTR loss with respect to the weights of the linear
/// model `f(x) = w . [protected, features...]`.
pub fn deltr_gradient<S: Scalar>(query: &QueryDocs<S>, weights: &[S], gamma: S) -> Result<Vec<S>> {
    let prepared = Prepared::from_query(query)?;
    prepared.check_weights(weights)?;
    let mut grad = vec![S::zero(); weights.len()];
    prepared.evaluate(weights, Objective::Deltr { gamma }, Some(&mut grad));
    Ok(grad)
}

/// Gradient of the plain ListNet loss under the same linear model.
pub fn listnet_gradient<S: Scalar>(query: &QueryDocs<S>, weights: &[S]) -> Result<Vec<S>> {
    let prepared = Prepared::from_query(query)?;
    prepared.check_weights(weights)?;
    let mut grad = vec![S::zero(); weights.len()];
    prepared.evaluate(weights, Objective::ListNet, Some(&mut grad));
    Ok(grad)
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective<S> {
    ListNet,
    Deltr { gamma: S },
}

/// A query reduced to what the objective needs: model input rows, group
/// flags and the target top-one distribution.
pub(crate) struct Prepared<S> {
    pub(crate) rows: Vec<Vec<S>>,
    pub(crate) flags: Vec<bool>,
    pub(crate) target: Vec<S>,
}

impl<S: Scalar> Prepared<S> {
    pub(crate) fn from_query(query: &QueryDocs<S>) -> Result<Self> {
        query.validate()?;
        Ok(Self::from_rows(
            query.docs.iter().map(|d| d.row()).collect(),
            query.protected_flags(),
            &query.judgments,
        ))
    }

    pub(crate) fn from_rows(rows: Vec<Vec<S>>, flags: Vec<bool>, judgments: &[S]) -> Self {
        Self {
            rows,
            flags,
            target: softmax(judgments),
        }
    }

    fn check_weights(&self, weights: &[S]) -> Result<()> {
        let dim = self.rows[0].len();
        if weights.len() != dim {
            return Err(Error::domain(format!(
                "weight vector has {} entries, documents have {dim} inputs",
                weights.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn scores(&self, weights: &[S]) -> Vec<S> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(weights).map(|(&x, &w)| x * w).sum())
            .collect()
    }

    /// Loss at `weights`; accumulates the weight gradient into `grad_w`.
    pub(crate) fn evaluate(&self, weights: &[S], objective: Objective<S>, grad_w: Option<&mut [S]>) -> LossParts<S> {
        let scores = self.scores(weights);
        let mut grad_s = grad_w.as_ref().map(|_| vec![S::zero(); scores.len()]);
        let relevance = cross_entropy(&self.target, &scores, grad_s.as_deref_mut());
        let probs = softmax(&scores);
        let (fairness, total) = match objective {
            Objective::ListNet => (fairness_term(&self.flags, &probs, None), relevance),
            Objective::Deltr { gamma } => {
                let fairness = if gamma == S::zero() {
                    fairness_term(&self.flags, &probs, None)
                } else {
                    fairness_term(&self.flags, &probs, grad_s.as_deref_mut().map(|g| (gamma, g)))
                };
                (fairness, relevance + gamma * fairness)
            }
        };
        if let (Some(grad_w), Some(grad_s)) = (grad_w, grad_s) {
            for (row, &gs) in self.rows.iter().zip(&grad_s) {
                for (gw, &x) in grad_w.iter_mut().zip(row) {
                    *gw = *gw + gs * x;
                }
            }
        }
        LossParts {
            total,
            relevance,
            fairness,
        }
    }
}
