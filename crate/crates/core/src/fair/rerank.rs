use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Candidate, MTable, ReRankResult};

/// Outcome of [`is_fair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FairnessCheck {
    pub fair: bool,
    /// Smallest 1-based prefix length whose requirement is not met.
    pub first_violation: Option<usize>,
}

/// Tests the top-`k` prefix of `ranking` against `mtable`.
pub fn is_fair<S: Scalar>(ranking: &[Candidate<S>], mtable: &MTable<S>) -> Result<FairnessCheck> {
    let k = mtable.k();
    if ranking.len() < k {
        return Err(Error::domain(format!(
            "ranking has {} items but the mtable covers {k} positions",
            ranking.len()
        )));
    }
    let mut protected = 0usize;
    for (i, (c, &need)) in ranking.iter().zip(mtable.entries()).enumerate() {
        if c.protected {
            protected += 1;
        }
        if protected < need {
            return Ok(FairnessCheck {
                fair: false,
                first_violation: Some(i + 1),
            });
        }
    }
    Ok(FairnessCheck {
        fair: true,
        first_violation: None,
    })
}

fn by_score_desc<S: Scalar>(a: &Candidate<S>, b: &Candidate<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

/// Re-ranks `candidates` so that every prefix meets the table's requirement
/// wherever enough protected candidates exist.
///
/// Two queues (protected, non-protected) sorted by score are merged greedily:
/// the best remaining candidate is taken unless doing so would leave the
/// current prefix short of protected items, in which case the best protected
/// candidate is taken instead. Equal scores go to the protected candidate,
/// then to the smaller id. The output has `min(k, |candidates|)` items and
/// keeps the relative order inside each group.
pub fn fair_rerank<S: Scalar>(candidates: &[Candidate<S>], mtable: &MTable<S>) -> Result<ReRankResult<S>> {
    if candidates.is_empty() {
        return Err(Error::domain("fair_rerank: candidate set is empty"));
    }
    let mut seen = HashSet::with_capacity(candidates.len());
    for c in candidates {
        c.validate()?;
        if !seen.insert(c.id.as_str()) {
            return Err(Error::domain(format!("duplicate candidate id `{}`", c.id)));
        }
    }

    let (mut protected, mut others): (Vec<_>, Vec<_>) =
        candidates.iter().cloned().partition(|c| c.protected);
    protected.sort_by(by_score_desc);
    others.sort_by(by_score_desc);
    let mut protected = VecDeque::from(protected);
    let mut others = VecDeque::from(others);

    let len = mtable.k().min(candidates.len());
    let mut ranking = Vec::with_capacity(len);
    let mut violations = Vec::new();
    let mut protected_count = 0usize;

    for position in 1..=len {
        let need = mtable.required_at(position);
        let best_is_protected = match (protected.front(), others.front()) {
            (Some(p), Some(o)) => p.score >= o.score,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let take_protected = if best_is_protected {
            true
        } else if protected_count < need {
            // Constraint binds: promote the best protected item if any is left.
            if protected.is_empty() {
                violations.push(position);
                false
            } else {
                true
            }
        } else {
            false
        };
        let next = if take_protected {
            protected_count += 1;
            protected.pop_front()
        } else {
            others.pop_front()
        };
        ranking.push(next.expect("queues hold at least `len` candidates"));
    }

    Ok(ReRankResult {
        ranking,
        satisfied: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{construct_mtable, FairnessParams};
    use super::*;
    use proptest::prelude::*;

    fn cand(id: &str, score: f64, protected: bool) -> Candidate<f64> {
        Candidate::new(id, score, protected).unwrap()
    }

    fn table(k: usize, p: f64) -> MTable<f64> {
        construct_mtable(FairnessParams::new(k, p, 0.1).unwrap(), false).unwrap()
    }

    fn economist() -> Vec<Candidate<f64>> {
        (0..10)
            .map(|i| cand(&format!("c{i}"), 10.0 - i as f64, i == 0))
            .collect()
    }

    fn ids(r: &[Candidate<f64>]) -> Vec<&str> {
        r.iter().map(|c| c.id.as_str()).collect()
    }

    #[test]
    fn economist_ranking() {
        let ranking = economist();
        assert_eq!(
            is_fair(&ranking, &table(10, 0.3)).unwrap(),
            FairnessCheck { fair: true, first_violation: None }
        );
        assert_eq!(
            is_fair(&ranking, &table(10, 0.5)).unwrap(),
            FairnessCheck { fair: false, first_violation: Some(7) }
        );
    }

    #[test]
    fn all_protected_is_fair() {
        let ranking: Vec<_> = (0..12).map(|i| cand(&format!("p{i}"), i as f64, true)).collect();
        assert!(is_fair(&ranking, &table(12, 0.7)).unwrap().fair);
    }

    #[test]
    fn short_ranking_is_rejected() {
        assert!(is_fair(&economist()[..5], &table(10, 0.5)).is_err());
    }

    #[test]
    fn greedy_merge_example() {
        let cands = vec![
            cand("m1", 0.9, false),
            cand("m2", 0.8, false),
            cand("m3", 0.7, false),
            cand("m4", 0.6, false),
            cand("f1", 0.5, true),
            cand("f2", 0.4, true),
        ];
        let t = table(6, 0.5);
        assert_eq!(t.entries(), &[0, 0, 0, 1, 1, 1]);
        let out = fair_rerank(&cands, &t).unwrap();
        assert_eq!(ids(&out.ranking), ["m1", "m2", "m3", "f1", "m4", "f2"]);
        assert!(out.satisfied);
        assert!(out.violations.is_empty());
    }

    #[test]
    fn zero_table_sorts_by_score() {
        let cands = vec![cand("a", 0.1, true), cand("b", 0.9, false), cand("c", 0.5, true)];
        let out = fair_rerank(&cands, &table(3, 0.1)).unwrap();
        assert_eq!(ids(&out.ranking), ["b", "c", "a"]);
        assert!(out.satisfied);
    }

    #[test]
    fn all_protected_sorts_by_score() {
        let cands = vec![cand("a", 0.1, true), cand("b", 0.9, true), cand("c", 0.5, true)];
        let out = fair_rerank(&cands, &table(3, 0.9)).unwrap();
        assert_eq!(ids(&out.ranking), ["b", "c", "a"]);
        assert!(out.satisfied);
    }

    #[test]
    fn ties_prefer_protected_then_id() {
        let cands = vec![cand("z", 1.0, false), cand("y", 1.0, true), cand("b", 1.0, false), cand("a", 1.0, false)];
        let out = fair_rerank(&cands, &table(4, 0.1)).unwrap();
        assert_eq!(ids(&out.ranking), ["y", "a", "b", "z"]);
    }

    #[test]
    fn shortage_is_reported() {
        let mut cands: Vec<_> = (0..9).map(|i| cand(&format!("m{i}"), 9.0 - i as f64, false)).collect();
        cands.push(cand("f", 0.0, true));
        let t = table(10, 0.5);
        let out = fair_rerank(&cands, &t).unwrap();
        // The single protected item is promoted to position 4; positions 7
        // and 9 need a second and third one that do not exist.
        assert_eq!(out.ranking[3].id, "f");
        assert_eq!(out.violations, vec![7, 8, 9, 10]);
        assert!(!out.satisfied);
        assert_eq!(out.ranking.len(), 10);
    }

    #[test]
    fn output_truncates_to_k() {
        let cands: Vec<_> = (0..20).map(|i| cand(&format!("c{i:02}"), i as f64, i % 3 == 0)).collect();
        let out = fair_rerank(&cands, &table(5, 0.5)).unwrap();
        assert_eq!(out.ranking.len(), 5);
        let out = fair_rerank(&cands[..3], &table(5, 0.5)).unwrap();
        assert_eq!(out.ranking.len(), 3);
    }

    #[test]
    fn input_errors() {
        assert!(fair_rerank::<f64>(&[], &table(3, 0.5)).is_err());
        let dup = vec![cand("a", 1.0, false), cand("a", 0.5, true)];
        assert!(fair_rerank(&dup, &table(2, 0.5)).is_err());
    }

    fn arb_candidates() -> impl Strategy<Value = Vec<Candidate<f64>>> {
        prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (s, p))| cand(&format!("d{i:03}"), (s * 20.0).round() / 20.0, p))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn rerank_properties(cands in arb_candidates(), k in 1usize..40, p in 0.05f64..0.95) {
            let t = table(k, p);
            let out = fair_rerank(&cands, &t).unwrap();
            prop_assert_eq!(out.ranking.len(), k.min(cands.len()));
            prop_assert_eq!(out.satisfied, out.violations.is_empty());

            let mut seen = HashSet::new();
            for c in &out.ranking {
                prop_assert!(seen.insert(c.id.clone()));
            }

            // Within-group order follows score order.
            for group in [true, false] {
                let g: Vec<_> = out.ranking.iter().filter(|c| c.protected == group).collect();
                for w in g.windows(2) {
                    prop_assert!(by_score_desc(w[0], w[1]) != Ordering::Greater);
                }
            }

            let protected_total = cands.iter().filter(|c| c.protected).count();
            if cands.len() >= k {
                if protected_total >= t.entries()[k - 1] {
                    prop_assert!(out.satisfied);
                }
                if out.satisfied {
                    prop_assert!(is_fair(&out.ranking, &t).unwrap().fair);
                }
            }
        }
    }
}
