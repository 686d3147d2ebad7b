//! Ranked group fairness: the binomial prefix test, MTable construction
//! (with optional multiple-testing adjustment of the significance level),
//! fairness verification and constraint-satisfying re-ranking.
//!
//! A ranking of length `k` passes the test when, for every prefix length `i`,
//! the number of protected items `tau` in the prefix satisfies
//! `F(tau; i, p) > alpha`, where `F` is the binomial CDF. The [`MTable`]
//! precomputes the smallest admissible `tau` for every prefix.

mod binomial;
mod mtable;
mod rerank;

pub use binomial::{binomial_cdf, required_protected};
pub use mtable::{adjust_alpha, compute_fail_probability, construct_mtable, ADJUST_TOLERANCE};
pub use rerank::{fair_rerank, is_fair, FairnessCheck};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One rankable item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate<S> {
    pub id: String,
    pub score: S,
    pub protected: bool,
}

impl<S: Scalar> Candidate<S> {
    pub fn new(id: impl Into<String>, score: S, protected: bool) -> Result<Self> {
        let candidate = Self {
            id: id.into(),
            score,
            protected,
        };
        candidate.validate()?;
        Ok(candidate)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::domain("candidate id must be non-empty"));
        }
        if !self.score.is_finite() {
            return Err(Error::domain(format!(
                "candidate `{}` has non-finite score",
                self.id
            )));
        }
        Ok(())
    }
}

/// Parameters of the ranked group fairness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FairnessParams<S> {
    k: usize,
    p: S,
    alpha: S,
}

impl<S: Scalar> FairnessParams<S> {
    /// `k >= 1`, `p` and `alpha` strictly inside `(0, 1)`.
    pub fn new(k: usize, p: S, alpha: S) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        check_open_unit("p", p)?;
        check_open_unit("alpha", alpha)?;
        Ok(Self { k, p, alpha })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    /// Storage key, see [`mtable_key`].
    pub fn key(&self) -> String {
        mtable_key(self.k, self.p, self.alpha)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for FairnessParams<S> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<S> {
            k: usize,
            p: S,
            alpha: S,
        }
        let raw = Raw::<S>::deserialize(de)?;
        FairnessParams::new(raw.k, raw.p, raw.alpha).map_err(serde::de::Error::custom)
    }
}

/// Storage key `k|p|alpha`, each number in its shortest round-trip decimal
/// form.
pub fn mtable_key<S: std::fmt::Display>(k: usize, p: S, alpha: S) -> String {
    format!("{k}|{p}|{alpha}")
}

pub(crate) fn check_open_unit<S: Scalar>(name: &str, v: S) -> Result<()> {
    if !(v > S::zero() && v < S::one()) {
        return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Minimum number of protected items required in every prefix of a ranking.
///
/// `entries[i]` is the requirement for the top `i + 1` positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MTableDoc<S>", try_from = "MTableDoc<S>", bound = "")]
pub struct MTable<S: Scalar> {
    params: FairnessParams<S>,
    alpha_c: S,
    entries: Vec<usize>,
}

impl<S: Scalar> MTable<S> {
    /// Assembles a table from stored parts, checking the structural
    /// invariants: length `k`, first entry 0 or 1, unit steps, and
    /// `entries[i] <= i + 1`.
    pub fn from_parts(params: FairnessParams<S>, alpha_c: S, entries: Vec<usize>) -> Result<Self> {
        if !(alpha_c > S::zero() && alpha_c <= params.alpha) {
            return Err(Error::domain(format!(
                "alpha_c must lie in (0, alpha], got {alpha_c} with alpha {}",
                params.alpha
            )));
        }
        if entries.len() != params.k {
            return Err(Error::domain(format!(
                "mtable has {} entries, expected k = {}",
                entries.len(),
                params.k
            )));
        }
        let mut prev = 0usize;
        for (i, &m) in entries.iter().enumerate() {
            if m < prev || m > prev + 1 {
                return Err(Error::domain(format!(
                    "mtable entry {} = {m} does not follow {prev} by a step of 0 or 1",
                    i + 1
                )));
            }
            if m > i + 1 {
                return Err(Error::domain(format!(
                    "mtable entry {} = {m} exceeds the prefix length",
                    i + 1
                )));
            }
            prev = m;
        }
        Ok(Self {
            params,
            alpha_c,
            entries,
        })
    }

    pub fn params(&self) -> &FairnessParams<S> {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn alpha_c(&self) -> S {
        self.alpha_c
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Requirement for the top-`position` prefix, 1-based.
    pub fn required_at(&self, position: usize) -> usize {
        self.entries[position - 1]
    }
}

/// Flat persisted form `{k, p, alpha, alpha_c, entries}`.
#[derive(Serialize, Deserialize)]
struct MTableDoc<S> {
    k: usize,
    p: S,
    alpha: S,
    alpha_c: S,
    entries: Vec<usize>,
}

impl<S: Scalar> From<MTable<S>> for MTableDoc<S> {
    fn from(t: MTable<S>) -> Self {
        Self {
            k: t.params.k,
            p: t.params.p,
            alpha: t.params.alpha,
            alpha_c: t.alpha_c,
            entries: t.entries,
        }
    }
}

impl<S: Scalar> TryFrom<MTableDoc<S>> for MTable<S> {
    type Error = Error;

    fn try_from(doc: MTableDoc<S>) -> Result<Self> {
        let params = FairnessParams::new(doc.k, doc.p, doc.alpha)?;
        MTable::from_parts(params, doc.alpha_c, doc.entries)
    }
}

/// Output of [`fair_rerank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReRankResult<S> {
    pub ranking: Vec<Candidate<S>>,
    /// `true` iff `violations` is empty.
    pub satisfied: bool,
    /// 1-based positions where the table's requirement could not be met.
    pub violations: Vec<usize>,
}
