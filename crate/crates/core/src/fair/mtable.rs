use crate::error::Result;
use crate::scalar::Scalar;

use super::{required_protected, FairnessParams, MTable};

/// Width of the bracket the significance search stops at. The fail
/// probability is piecewise constant in `alpha_c`, so a finer search cannot
/// change the resulting table in practice.
pub const ADJUST_TOLERANCE: f64 = 1e-7;

/// Builds the table for the given parameters, either at the raw `alpha` or
/// at the adjusted level returned by [`adjust_alpha`].
pub fn construct_mtable<S: Scalar>(params: FairnessParams<S>, adjust: bool) -> Result<MTable<S>> {
    let alpha_c = if adjust {
        adjust_alpha(params)?
    } else {
        params.alpha()
    };
    let entries = entries_at(params, alpha_c)?;
    MTable::from_parts(params, alpha_c, entries)
}

fn entries_at<S: Scalar>(params: FairnessParams<S>, alpha_c: S) -> Result<Vec<usize>> {
    (1..=params.k())
        .map(|i| required_protected(i, params.p(), alpha_c))
        .collect()
}

/// Probability that a ranking produced by the fair process (each position
/// protected independently with probability `p`) violates at least one
/// prefix requirement of `mtable`.
pub fn compute_fail_probability<S: Scalar>(mtable: &MTable<S>) -> S {
    fail_probability(mtable.params().p(), mtable.entries())
}

fn fail_probability<S: Scalar>(p: S, entries: &[usize]) -> S {
    let q = S::one() - p;
    // dist[c] = probability of having seen c protected items so far without
    // having failed any earlier prefix.
    let mut dist = vec![S::zero(); entries.len() + 1];
    dist[0] = S::one();
    let mut failed = S::zero();
    for (pos, &need) in entries.iter().enumerate() {
        for c in (0..=pos).rev() {
            let mass = dist[c];
            dist[c + 1] = dist[c + 1] + mass * p;
            dist[c] = mass * q;
        }
        for slot in dist.iter_mut().take(need) {
            failed = failed + *slot;
            *slot = S::zero();
        }
    }
    failed.min(S::one())
}

/// Largest per-prefix significance `alpha_c <= alpha` whose table keeps the
/// overall fail probability at or below `alpha`.
///
/// Bisection over `alpha_c`; the fail probability is monotone non-decreasing
/// in `alpha_c`. The returned value is feasible and lies within
/// [`ADJUST_TOLERANCE`] of the first infeasible level.
pub fn adjust_alpha<S: Scalar>(params: FairnessParams<S>) -> Result<S> {
    let alpha = params.alpha();
    let p = params.p();
    let feasible = |alpha_c: S| -> Result<bool> {
        Ok(fail_probability(p, &entries_at(params, alpha_c)?) <= alpha)
    };
    if feasible(alpha)? {
        return Ok(alpha);
    }

    let tol = S::of(ADJUST_TOLERANCE);
    let two = S::of(2.0);
    let mut lo = S::zero();
    let mut hi = alpha;
    while hi - lo > tol {
        let mid = (lo + hi) / two;
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > S::zero() {
        return Ok(lo);
    }
    // Every level above `tol` already fails. Fall back to one small enough
    // that no prefix binds: F(0; i, p) >= (1-p)^k for all i.
    let floor = (S::one() - p).powi(params.k() as i32) / two;
    Ok(if floor > S::zero() { floor.min(hi / two) } else { S::min_positive_value() })
}
