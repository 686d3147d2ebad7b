use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::check_open_unit;

/// Running log-sum-exp over the binomial pmf terms `j = 0, 1, ..., k`.
///
/// The pmf is advanced by the ratio `pmf(j+1)/pmf(j) = (k-j)/(j+1) * p/(1-p)`
/// in log space, so `(1-p)^k` never underflows for large `k`.
struct CdfAccumulator<S> {
    k: usize,
    j: usize,
    log_pmf: S,
    log_odds: S,
    max: S,
    scaled_sum: S,
}

impl<S: Scalar> CdfAccumulator<S> {
    fn new(k: usize, p: S) -> Self {
        let q = S::one() - p;
        let log_pmf = S::of_usize(k) * q.ln();
        Self {
            k,
            j: 0,
            log_pmf,
            log_odds: p.ln() - q.ln(),
            max: log_pmf,
            scaled_sum: S::one(),
        }
    }

    /// `F(j; k, p)` for the current `j`.
    fn value(&self) -> S {
        let v = self.max.exp() * self.scaled_sum;
        v.min(S::one())
    }

    /// Moves to `j + 1`, folding `pmf(j + 1)` into the sum.
    fn advance(&mut self) {
        let ratio = S::of_usize(self.k - self.j) / S::of_usize(self.j + 1);
        self.log_pmf = self.log_pmf + ratio.ln() + self.log_odds;
        self.j += 1;
        if self.log_pmf > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - self.log_pmf).exp() + S::one();
            self.max = self.log_pmf;
        } else {
            self.scaled_sum = self.scaled_sum + (self.log_pmf - self.max).exp();
        }
    }
}

/// Binomial cumulative distribution `P[X <= tau]` for `X ~ Bin(k, p)`.
pub fn binomial_cdf<S: Scalar>(tau: usize, k: usize, p: S) -> Result<S> {
    if k == 0 {
        return Err(Error::domain("binomial_cdf: k must be at least 1"));
    }
    if tau > k {
        return Err(Error::domain(format!(
            "binomial_cdf: tau = {tau} exceeds k = {k}"
        )));
    }
    check_open_unit("p", p)?;
    if tau == k {
        return Ok(S::one());
    }
    let mut acc = CdfAccumulator::new(k, p);
    for _ in 0..tau {
        acc.advance();
    }
    Ok(acc.value())
}

/// Smallest `tau` in `[0, i]` with `F(tau; i, p) > alpha_c`.
///
/// This is the minimum number of protected items the top `i` positions must
/// hold to pass the one-sided binomial test at level `alpha_c`.
pub fn required_protected<S: Scalar>(i: usize, p: S, alpha_c: S) -> Result<usize> {
    if i == 0 {
        return Err(Error::domain("required_protected: i must be at least 1"));
    }
    check_open_unit("p", p)?;
    check_open_unit("alpha_c", alpha_c)?;
    let mut acc = CdfAccumulator::new(i, p);
    for tau in 0..i {
        if acc.value() > alpha_c {
            return Ok(tau);
        }
        acc.advance();
    }
    Ok(i)
}
