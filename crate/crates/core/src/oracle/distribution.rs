use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::log_sum_exp;
use crate::scalar::Real;

/// Probability weights over a finite hypothesis set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", try_from = "Vec<R>", into = "Vec<R>")]
pub struct DiscreteDistribution<R> {
    weights: Vec<R>,
}

impl<R: Real> TryFrom<Vec<R>> for DiscreteDistribution<R> {
    type Error = Error;

    fn try_from(weights: Vec<R>) -> Result<Self> {
        Self::new(weights)
    }
}

impl<R: Real> From<DiscreteDistribution<R>> for Vec<R> {
    fn from(d: DiscreteDistribution<R>) -> Self {
        d.weights
    }
}

impl<R: Real> DiscreteDistribution<R> {
    /// Validates nonnegative weights summing to one.
    pub fn new(weights: Vec<R>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no hypotheses".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= R::zero())) {
            return Err(Error::InvalidDistribution(format!(
                "weight {i} is negative or not finite"
            )));
        }
        let total: R = weights.iter().copied().sum();
        if (total - R::one()).abs() > R::sum_tolerance(weights.len()) {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative masses.
    pub fn from_unnormalized(mass: Vec<R>) -> Result<Self> {
        if mass.iter().any(|w| !(w.is_finite() && *w >= R::zero())) {
            return Err(Error::InvalidDistribution(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: R = mass.iter().copied().sum();
        if !(total > R::zero()) {
            return Err(Error::DegeneratePrior);
        }
        Ok(Self {
            weights: mass.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Softmax of log-masses; `-inf` entries get weight zero.
    pub fn from_log_weights(log_mass: &[R]) -> Result<Self> {
        if log_mass.iter().any(|x| x.is_nan() || *x == R::infinity()) {
            return Err(Error::domain("log-weights must be below +inf and not NaN"));
        }
        let z = log_sum_exp(log_mass);
        if z == R::neg_infinity() {
            return Err(Error::DegeneratePrior);
        }
        let mut weights: Vec<R> = log_mass.iter().map(|&l| (l - z).exp()).collect();
        // One more pass removes the rounding left by exp.
        let total: R = weights.iter().copied().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("no hypotheses".into()));
        }
        Ok(Self {
            weights: vec![R::one() / R::lit(n as f64); n],
        })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::IndexOutOfRange {
                what: "hypothesis",
                index: at,
                limit: n,
            });
        }
        let mut weights = vec![R::zero(); n];
        weights[at] = R::one();
        Ok(Self { weights })
    }

    #[inline]
    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `ln w_h`, with `-inf` off the support.
    pub fn log_weights(&self) -> Vec<R> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    /// `E_{h~self} f(h)`.
    pub fn expect(&self, f: &[R]) -> Result<R> {
        check_len(self.len(), f.len())?;
        Ok(self
            .weights
            .iter()
            .zip(f)
            .filter(|(w, _)| **w > R::zero())
            .map(|(&w, &v)| w * v)
            .sum())
    }

    /// `ln E_{h~self} exp(f(h))`, stabilized.
    pub fn log_expect_exp(&self, f: &[R]) -> Result<R> {
        check_len(self.len(), f.len())?;
        Ok(crate::numerics::log_weighted_sum_exp(&self.weights, f))
    }

    /// Total-variation distance `½ Σ |p - q|`.
    pub fn total_variation(&self, other: &Self) -> Result<R> {
        check_len(self.len(), other.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<R>()
            * R::lit(0.5))
    }
}

/// Gibbs tilt `w_h ∝ prior_h · exp(-λ · losses_h)`. `λ = 0` returns the prior unchanged.
pub fn gibbs_posterior<R: Real>(
    prior: &DiscreteDistribution<R>,
    losses: &[R],
    lambda: R,
) -> Result<DiscreteDistribution<R>> {
    check_len(prior.len(), losses.len())?;
    if !(lambda >= R::zero()) || !lambda.is_finite() {
        return Err(Error::domain("Gibbs temperature must be finite and nonnegative"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::domain("losses must be finite"));
    }
    if prior.weights().iter().all(|&w| w == R::zero()) {
        return Err(Error::DegeneratePrior);
    }
    if lambda == R::zero() {
        return Ok(prior.clone());
    }
    let logits: Vec<R> = prior
        .weights()
        .iter()
        .zip(losses)
        .map(|(&w, &l)| w.ln() - lambda * l)
        .collect();
    DiscreteDistribution::from_log_weights(&logits)
}

/// `KL(q ‖ p) = Σ q ln(q/p)` with `0 ln 0 = 0`.
pub fn kl_discrete<R: Real>(q: &DiscreteDistribution<R>, p: &DiscreteDistribution<R>) -> Result<R> {
    check_len(p.len(), q.len())?;
    let mut kl = R::zero();
    for (h, (&qh, &ph)) in q.weights().iter().zip(p.weights()).enumerate() {
        if qh == R::zero() {
            continue;
        }
        if ph == R::zero() {
            return Err(Error::NotAbsolutelyContinuous(h));
        }
        kl += qh * (qh.ln() - ph.ln());
    }
    Ok(kl.max(R::zero()))
}

/// Applies the Gibbs update once per task: `Q_{1:i} ∝ Q_{1:i-1} · exp(-λ_i L̂_i)`.
pub fn sequential_gibbs<R: Real>(
    prior: &DiscreteDistribution<R>,
    tables: &[Vec<R>],
    lambdas: &[R],
) -> Result<DiscreteDistribution<R>> {
    check_len(tables.len(), lambdas.len())?;
    let mut q = prior.clone();
    for (table, &lambda) in tables.iter().zip(lambdas) {
        q = gibbs_posterior(&q, table, lambda)?;
    }
    Ok(q)
}

/// Objective minimized by the Gibbs posterior: `E_Q L̂ + KL(Q ‖ prior) / λ`.
pub fn gibbs_objective<R: Real>(
    q: &DiscreteDistribution<R>,
    prior: &DiscreteDistribution<R>,
    losses: &[R],
    lambda: R,
) -> Result<R> {
    if !(lambda > R::zero()) {
        return Err(Error::domain("λ must be positive"));
    }
    Ok(q.expect(losses)? + kl_discrete(q, prior)? / lambda)
}
