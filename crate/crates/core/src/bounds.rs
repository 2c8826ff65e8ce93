//! Data-dependent forgetting and backward-transfer bounds assembled from
//! trained posteriors, held-out losses, and Monte-Carlo estimates.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::metrics::{loss_draws, Hypothesis, HypothesisSource, LossDraws, LossFunction, McEstimate, TaskDataset};
use crate::numerics::{log_mean_exp, log_sum_exp, mean_and_stderr};
use crate::rng::{self, derive_seed};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct BoundConfig<R> {
    /// Temperature of the bound; also the KL weight `1/λ` used in training.
    pub lambda: R,
    #[serde(default = "defaults::delta")]
    pub delta: R,
    /// Loss bound `K`.
    #[serde(default = "defaults::k")]
    pub k: R,
    /// Posterior draws for loss estimates.
    #[serde(default = "defaults::n_mc")]
    pub n_mc: usize,
    /// Draws from the previous posterior for the disagreement term.
    #[serde(default = "defaults::n_mc")]
    pub n_mc_prior: usize,
    #[serde(default = "defaults::gamma")]
    pub gamma: R,
    #[serde(default)]
    pub estimator: DisagreementEstimator,
}

/// How the expectation under the previous posterior in the disagreement term
/// is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementEstimator {
    /// Plain averages over `n_mc_prior` draws from the previous posterior.
    Prior,
    /// `n_mc_prior` draws from the previous posterior pooled with `n_mc` draws
    /// from the current one, each weighted by `p / (α p + (1 - α) q)` where
    /// `α` is the share of previous-posterior draws.
    #[default]
    Mixture,
}

mod defaults {
    use crate::scalar::Real;

    pub fn delta<R: Real>() -> R {
        R::lit(0.05)
    }
    pub fn k<R: Real>() -> R {
        R::one()
    }
    pub fn n_mc() -> usize {
        30
    }
    pub fn gamma<R: Real>() -> R {
        R::lit(0.95)
    }
}

impl<R: Real> BoundConfig<R> {
    pub fn new(lambda: R) -> Self {
        Self {
            lambda,
            delta: defaults::delta(),
            k: defaults::k(),
            n_mc: defaults::n_mc(),
            n_mc_prior: defaults::n_mc(),
            gamma: defaults::gamma(),
            estimator: DisagreementEstimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > R::zero()) || !self.lambda.is_finite() {
            return Err(Error::Config("λ must be positive and finite".into()));
        }
        if !(self.delta > R::zero() && self.delta < R::one()) {
            return Err(Error::Config("δ must lie in (0, 1)".into()));
        }
        if !(self.k >= R::zero()) || !self.k.is_finite() {
            return Err(Error::Config("K must be finite and nonnegative".into()));
        }
        if self.n_mc == 0 || self.n_mc_prior == 0 {
            return Err(Error::Config("Monte-Carlo sizes must be at least 1".into()));
        }
        if !(self.gamma > R::zero() && self.gamma <= R::one()) {
            return Err(Error::Config("γ must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Itemized forgetting bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct BoundReport<R> {
    pub empirical_term: R,
    pub past_loss_term: R,
    pub kl_term: R,
    pub hoeffding_term: R,
    pub confidence_term: R,
    pub disagreement_term: R,
    pub total_forgetting_bound: R,
    pub total_bwt_bound: R,
}

impl<R: Real> BoundReport<R> {
    /// Fills in both totals from the six terms.
    pub fn from_terms(
        empirical_term: R,
        past_loss_term: R,
        kl_term: R,
        hoeffding_term: R,
        confidence_term: R,
        disagreement_term: R,
    ) -> Self {
        let total_forgetting_bound = empirical_term - past_loss_term
            + kl_term
            + hoeffding_term
            + confidence_term
            + disagreement_term;
        Self {
            empirical_term,
            past_loss_term,
            kl_term,
            hoeffding_term,
            confidence_term,
            disagreement_term,
            total_forgetting_bound,
            total_bwt_bound: total_forgetting_bound + past_loss_term,
        }
    }

    /// Largest deviation of the stored totals from the sum of their terms.
    pub fn consistency_error(&self) -> R {
        let f = self.empirical_term - self.past_loss_term
            + self.kl_term
            + self.hoeffding_term
            + self.confidence_term
            + self.disagreement_term;
        (self.total_forgetting_bound - f)
            .abs()
            .max((self.total_bwt_bound - (f + self.past_loss_term)).abs())
    }
}

/// `KL(N(μq, σq²) ‖ N(μp, σp²))` for diagonal Gaussians given log standard
/// deviations. Coordinates with identical parameters contribute zero, which
/// includes matching point masses (`log_std = -inf`).
pub fn kl_gaussian_diag<R: Real>(q_mean: &[R], q_logstd: &[R], p_mean: &[R], p_logstd: &[R]) -> Result<R> {
    let d = q_mean.len();
    if d == 0 {
        return Err(Error::domain("Gaussian dimension must be at least 1"));
    }
    check_len(d, q_logstd.len())?;
    check_len(d, p_mean.len())?;
    check_len(d, p_logstd.len())?;
    let half = R::lit(0.5);
    let mut kl = R::zero();
    for j in 0..d {
        let (mq, sq, mp, sp) = (q_mean[j], q_logstd[j], p_mean[j], p_logstd[j]);
        if mq == mp && sq == sp {
            continue;
        }
        let log_ratio = sq - sp;
        let var_ratio = (R::lit(2.0) * log_ratio).exp();
        let diff = mp - mq;
        let scaled = diff * (-sp).exp();
        kl += half * (var_ratio + scaled * scaled - R::one()) - log_ratio;
    }
    Ok(kl.max(R::zero()))
}

/// `‖w_new - w_old‖² / (2σ²)`.
pub fn kl_isotropic_shift<R: Real>(w_new: &[R], w_old: &[R], sigma2: R) -> Result<R> {
    check_len(w_old.len(), w_new.len())?;
    if !(sigma2 > R::zero()) {
        return Err(Error::domain("σ² must be positive"));
    }
    let sq: R = w_new.iter().zip(w_old).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sq / (R::lit(2.0) * sigma2))
}

/// `(λK²/(8m), ln(1/δ)/λ)`.
pub fn structural_terms<R: Real>(lambda: R, k: R, m: usize, delta: R) -> Result<(R, R)> {
    if !(lambda > R::zero()) || !lambda.is_finite() {
        return Err(Error::domain("λ must be positive and finite"));
    }
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    if !(delta > R::zero() && delta <= R::one()) {
        return Err(Error::domain("δ must lie in (0, 1]"));
    }
    if !(k >= R::zero()) {
        return Err(Error::domain("K must be nonnegative"));
    }
    let hoeffding = lambda * k * k / (R::lit(8.0) * R::lit(m as f64));
    let confidence = -delta.ln() / lambda;
    Ok((hoeffding, confidence))
}

/// A distribution over hypotheses with a closed-form KL divergence inside its family.
pub trait PosteriorFamily<R: Real>: HypothesisSource<R> {
    fn kl_divergence(&self, other: &Self) -> Result<R>;

    /// `ln self(h) - ln other(h)` for a draw `h` of either distribution.
    fn log_density_ratio(&self, other: &Self, h: &Self::Draw) -> Result<R>;
}

/// As [`loss_draws`], also returning `ln source(h) - ln reference(h)` for
/// every draw. The losses are identical to those of [`loss_draws`] with the
/// same seed.
pub fn loss_draws_with_ratio<R, Q>(
    source: &Q,
    reference: &Q,
    datasets: &[&TaskDataset<R>],
    loss: &LossFunction<R>,
    n_draws: usize,
    seed: u64,
) -> Result<(LossDraws<R>, Vec<R>)>
where
    R: Real,
    Q: PosteriorFamily<R>,
{
    if n_draws == 0 {
        return Err(Error::domain("number of Monte-Carlo draws must be at least 1"));
    }
    if datasets.iter().any(|d| d.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let n = if source.is_point() { 1 } else { n_draws };
    let mut g = rng::stream(seed, 0);
    let mut values = Vec::with_capacity(n);
    let mut ratios = Vec::with_capacity(n);
    for _ in 0..n {
        let h = source.draw(&mut g);
        let row = datasets
            .iter()
            .map(|d| h.empirical_loss(d, loss))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
        ratios.push(source.log_density_ratio(reference, &h)?);
    }
    Ok((LossDraws { values }, ratios))
}

/// Log importance weights `ln p(h) - ln(α p(h) + (1 - α) q(h))` for pooled
/// draws, the first `n_previous` from `p` and the rest from `q`.
/// `log_q_over_p[j]` is `ln q(h_j) - ln p(h_j)`.
pub fn mixture_log_weights<R: Real>(n_previous: usize, log_q_over_p: &[R]) -> Result<Vec<R>> {
    let n = log_q_over_p.len();
    if n == 0 || n_previous > n {
        return Err(Error::domain("pooled draws must include the previous-posterior draws"));
    }
    let alpha = R::lit(n_previous as f64 / n as f64);
    let (la, lb) = (alpha.ln(), (R::one() - alpha).ln());
    Ok(log_q_over_p.iter().map(|&r| -log_sum_exp(&[la, lb + r])).collect())
}

/// Disagreement term from per-draw losses whose first `n_past` columns are
/// past held-out sets and whose last column is the current training set.
///
/// The standard error follows the delta method on the shared draws.
pub fn disagreement_from_draws<R: Real>(draws: &LossDraws<R>, n_past: usize, lambda: R) -> Result<McEstimate<R>> {
    disagreement_from_weighted_draws(draws, &vec![R::zero(); draws.n_draws()], n_past, lambda)
}

/// As [`disagreement_from_draws`] with importance weights `exp(log_weights[j])`
/// on the draws.
pub fn disagreement_from_weighted_draws<R: Real>(
    draws: &LossDraws<R>,
    log_weights: &[R],
    n_past: usize,
    lambda: R,
) -> Result<McEstimate<R>> {
    check_len(draws.n_draws(), log_weights.len())?;
    if n_past == 0 {
        return Err(Error::NoPreviousTasks);
    }
    if !(lambda > R::zero()) || !lambda.is_finite() {
        return Err(Error::domain("λ must be positive and finite"));
    }
    let n = draws.n_draws();
    if n == 0 {
        return Err(Error::domain("no hypothesis draws"));
    }
    let cur = n_past;
    if draws.values.iter().any(|row| row.len() != n_past + 1) {
        return Err(Error::VectorLength {
            expected: n_past + 1,
            got: draws.values[0].len(),
        });
    }
    let scale = R::one() / (R::lit(n_past as f64) * lambda);
    let mut total = R::zero();
    let mut influence = vec![R::zero(); n];
    let mut exponent = vec![R::zero(); n];
    for t in 0..n_past {
        for ((e, row), &lw) in exponent.iter_mut().zip(&draws.values).zip(log_weights) {
            *e = lambda * (row[t] - row[cur]) + lw;
        }
        let lme = log_mean_exp(&exponent);
        total += lme;
        for (inf, &e) in influence.iter_mut().zip(&exponent) {
            *inf += (e - lme).exp();
        }
    }
    let value = scale * total;
    let stderr = if n < 2 {
        R::zero()
    } else {
        let scaled: Vec<R> = influence.iter().map(|&v| v * scale).collect();
        mean_and_stderr(&scaled).1
    };
    Ok(McEstimate { value, stderr })
}

/// `(1/((T-1)λ)) Σ_t ln (1/n) Σ_h exp(λ(L̂(h, test_t) - L̂(h, S_T)))` with
/// `n_mc_prior` draws from `prior_posterior` shared across past tasks.
pub fn disagreement_mc<R, S>(
    prior_posterior: &S,
    past_test_sets: &[&TaskDataset<R>],
    current_train_set: &TaskDataset<R>,
    loss: &LossFunction<R>,
    lambda: R,
    n_mc_prior: usize,
    seed: u64,
) -> Result<McEstimate<R>>
where
    R: Real,
    S: HypothesisSource<R>,
{
    if past_test_sets.is_empty() {
        return Err(Error::NoPreviousTasks);
    }
    let mut sets: Vec<&TaskDataset<R>> = past_test_sets.to_vec();
    sets.push(current_train_set);
    let draws = loss_draws(prior_posterior, &sets, loss, n_mc_prior, seed)?;
    disagreement_from_draws(&draws, past_test_sets.len(), lambda)
}

/// Disagreement term estimated from draws of both posteriors; see
/// [`DisagreementEstimator::Mixture`]. The expectation is still taken under
/// `previous_posterior`.
#[allow(clippy::too_many_arguments)]
pub fn disagreement_mixture<R, Q>(
    previous_posterior: &Q,
    current_posterior: &Q,
    past_test_sets: &[&TaskDataset<R>],
    current_train_set: &TaskDataset<R>,
    loss: &LossFunction<R>,
    lambda: R,
    n_previous: usize,
    n_current: usize,
    seed: u64,
) -> Result<McEstimate<R>>
where
    R: Real,
    Q: PosteriorFamily<R>,
{
    if past_test_sets.is_empty() {
        return Err(Error::NoPreviousTasks);
    }
    let mut sets: Vec<&TaskDataset<R>> = past_test_sets.to_vec();
    sets.push(current_train_set);
    let (prev, prev_ratio) = loss_draws_with_ratio(previous_posterior, current_posterior, &sets, loss, n_previous, seed)?;
    let (cur, cur_ratio) = loss_draws_with_ratio(
        current_posterior,
        previous_posterior,
        &sets,
        loss,
        n_current,
        derive_seed(seed, 1),
    )?;
    let n_prev = prev.n_draws();
    let log_q_over_p: Vec<R> = prev_ratio.iter().map(|&r| -r).chain(cur_ratio).collect();
    let mut values = prev.values;
    values.extend(cur.values);
    let weights = mixture_log_weights(n_prev, &log_q_over_p)?;
    disagreement_from_weighted_draws(&LossDraws { values }, &weights, past_test_sets.len(), lambda)
}

/// A bound report with the combined Monte-Carlo standard error of its
/// estimated terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct AssembledBound<R> {
    pub report: BoundReport<R>,
    pub mc_stderr: R,
}

/// Assembles the forgetting bound for the latest posterior.
///
/// `past_after_training_losses[t]` is the held-out loss stored right after task
/// `t` was learned.
#[allow(clippy::too_many_arguments)]
pub fn forgetting_bound_assemble<R, Q>(
    current_posterior: &Q,
    previous_posterior: &Q,
    current_train_set: &TaskDataset<R>,
    past_test_sets: &[&TaskDataset<R>],
    past_after_training_losses: &[R],
    loss: &LossFunction<R>,
    cfg: &BoundConfig<R>,
    seed: u64,
) -> Result<AssembledBound<R>>
where
    R: Real,
    Q: PosteriorFamily<R>,
{
    cfg.validate()?;
    if past_test_sets.is_empty() {
        return Err(Error::NoPreviousTasks);
    }
    check_len(past_test_sets.len(), past_after_training_losses.len())?;
    let empirical = loss_draws(current_posterior, &[current_train_set], loss, cfg.n_mc, seed)?.estimate(0);
    let disagreement = match cfg.estimator {
        DisagreementEstimator::Prior => disagreement_mc(
            previous_posterior,
            past_test_sets,
            current_train_set,
            loss,
            cfg.lambda,
            cfg.n_mc_prior,
            derive_seed(seed, 1),
        )?,
        DisagreementEstimator::Mixture => disagreement_mixture(
            previous_posterior,
            current_posterior,
            past_test_sets,
            current_train_set,
            loss,
            cfg.lambda,
            cfg.n_mc_prior,
            cfg.n_mc,
            derive_seed(seed, 1),
        )?,
    };
    let past = past_after_training_losses.iter().copied().sum::<R>()
        / R::lit(past_after_training_losses.len() as f64);
    let kl = current_posterior.kl_divergence(previous_posterior)?;
    let (hoeffding, confidence) = structural_terms(cfg.lambda, cfg.k, current_train_set.m(), cfg.delta)?;
    let report = BoundReport::from_terms(
        empirical.value,
        past,
        kl / cfg.lambda,
        hoeffding,
        confidence,
        disagreement.value,
    );
    let mc_stderr = (empirical.stderr * empirical.stderr + disagreement.stderr * disagreement.stderr).sqrt();
    Ok(AssembledBound { report, mc_stderr })
}
