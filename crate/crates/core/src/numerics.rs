//! Log-domain helpers. Every exponential in the crate goes through these.

use crate::scalar::Real;

/// `ln Σ exp(x_i)` with max-subtraction. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<R: Real>(xs: &[R]) -> R {
    let max = xs.iter().copied().fold(R::neg_infinity(), R::max);
    if max == R::neg_infinity() {
        return R::neg_infinity();
    }
    if max == R::infinity() {
        return R::infinity();
    }
    let s: R = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `ln Σ w_i exp(x_i)` for nonnegative weights; zero-weight terms are skipped.
pub fn log_weighted_sum_exp<R: Real>(weights: &[R], xs: &[R]) -> R {
    debug_assert_eq!(weights.len(), xs.len());
    let max = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > R::zero())
        .map(|(_, &x)| x)
        .fold(R::neg_infinity(), R::max);
    if max == R::neg_infinity() || max == R::infinity() {
        return max;
    }
    let s: R = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > R::zero())
        .map(|(&w, &x)| w * (x - max).exp())
        .sum();
    max + s.ln()
}

/// `ln((1/n) Σ exp(x_i))`.
pub fn log_mean_exp<R: Real>(xs: &[R]) -> R {
    log_sum_exp(xs) - R::lit(xs.len() as f64).ln()
}

/// Sample mean and standard error of the mean (`sd / sqrt(n)`, with the
/// `n - 1` denominator). The standard error is zero for fewer than two values.
pub fn mean_and_stderr<R: Real>(xs: &[R]) -> (R, R) {
    let n = xs.len();
    if n == 0 {
        return (R::nan(), R::nan());
    }
    let nr = R::lit(n as f64);
    let mean = xs.iter().copied().sum::<R>() / nr;
    if n < 2 {
        return (mean, R::zero());
    }
    let ss: R = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let var = ss / R::lit((n - 1) as f64);
    (mean, (var / nr).sqrt())
}
