//! Exact bound terms on finite spaces and resampling checks of the oracle
//! inequalities.

use serde::{Deserialize, Serialize};

use super::distribution::{gibbs_posterior, kl_discrete, sequential_gibbs, DiscreteDistribution};
use super::space::DiscreteHypothesisSpace;
use crate::error::{check_len, Error, Result};
use crate::numerics::mean_and_stderr;
use crate::rng;
use crate::scalar::Real;

/// Outcome of comparing an inequality's two sides.
///
/// `gap = rhs - lhs`; the inequality holds when `gap >= -3 · mc_stderr`,
/// relaxed by a floating-point rounding allowance proportional to the
/// magnitude of the two sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct BoundCheckResult<R> {
    pub lhs: R,
    pub rhs: R,
    pub gap: R,
    pub holds: bool,
    /// Zero when both sides are exact.
    pub mc_stderr: R,
    /// Resamples on which a stated precondition failed.
    pub violations: usize,
    pub precondition_violated: bool,
}

impl<R: Real> BoundCheckResult<R> {
    pub fn new(lhs: R, rhs: R, mc_stderr: R) -> Self {
        let gap = rhs - lhs;
        let scale = R::one().max(lhs.abs()).max(rhs.abs());
        let rounding = R::epsilon() * R::lit(64.0) * scale;
        Self {
            lhs,
            rhs,
            gap,
            holds: gap >= -(R::lit(3.0) * mc_stderr) - rounding,
            mc_stderr,
            violations: 0,
            precondition_violated: false,
        }
    }

    pub fn exact(lhs: R, rhs: R) -> Self {
        Self::new(lhs, rhs, R::zero())
    }

    fn with_violations(mut self, violations: usize) -> Self {
        self.violations = violations;
        self.precondition_violated = violations > 0;
        self
    }
}

/// Change-of-measure inequality:
/// `λ(E_ρ f - E_π f) ≤ KL(ρ‖π) + ln E_π exp(λ(f - E_π f))`.
pub fn change_of_measure_check<R: Real>(
    rho: &DiscreteDistribution<R>,
    pi: &DiscreteDistribution<R>,
    f: &[R],
    lambda: R,
) -> Result<BoundCheckResult<R>> {
    check_len(pi.len(), f.len())?;
    if f.iter().any(|v| !v.is_finite()) || !lambda.is_finite() {
        return Err(Error::domain("f and λ must be finite"));
    }
    let kl = kl_discrete(rho, pi)?;
    let mean_pi = pi.expect(f)?;
    let lhs = lambda * (rho.expect(f)? - mean_pi);
    let centered: Vec<R> = f.iter().map(|&v| lambda * (v - mean_pi)).collect();
    let rhs = kl + pi.log_expect_exp(&centered)?;
    Ok(BoundCheckResult::exact(lhs, rhs))
}

/// `(1/λ) ln Σ_h prior_h exp(λ(L_s[h] - L̂_t[h]))`, the disagreement term of
/// the two-task forgetting bound.
pub fn disagreement_exact<R: Real>(
    prior: &DiscreteDistribution<R>,
    source_loss: &[R],
    target_empirical: &[R],
    lambda: R,
) -> Result<R> {
    check_len(prior.len(), source_loss.len())?;
    check_len(prior.len(), target_empirical.len())?;
    if !(lambda > R::zero()) {
        return Err(Error::domain("λ must be positive"));
    }
    let exponent: Vec<R> = source_loss
        .iter()
        .zip(target_empirical)
        .map(|(&s, &t)| lambda * (s - t))
        .collect();
    Ok(prior.log_expect_exp(&exponent)? / lambda)
}

/// Exact two-task forgetting bound for fixed `Q_s`, `Q_{s:t}`:
/// `L(Q_{s:t}, D_s) ≤ L̂(Q_{s:t}, S_t) + KL(Q_{s:t}‖Q_s)/λ + disagreement`.
pub fn forgetting_bound_exact<R: Real>(
    q_source: &DiscreteDistribution<R>,
    q_updated: &DiscreteDistribution<R>,
    source_loss: &[R],
    target_empirical: &[R],
    lambda: R,
) -> Result<BoundCheckResult<R>> {
    let lhs = q_updated.expect(source_loss)?;
    let rhs = q_updated.expect(target_empirical)?
        + kl_discrete(q_updated, q_source)? / lambda
        + disagreement_exact(q_source, source_loss, target_empirical, lambda)?;
    Ok(BoundCheckResult::exact(lhs, rhs))
}

/// Centered covariance `Σ_h p_h (x_h - E x)(y_h - E y)`.
fn weighted_covariance<R: Real>(p: &DiscreteDistribution<R>, x: &[R], y: &[R]) -> Result<R> {
    let ex = p.expect(x)?;
    let ey = p.expect(y)?;
    Ok(p.weights()
        .iter()
        .zip(x.iter().zip(y))
        .map(|(&w, (&a, &b))| w * (a - ex) * (b - ey))
        .sum())
}

/// `cov_{h~prior}(exp(-λ L̂_s[h]), exp(-λ L̂_t[h]))`.
pub fn loss_covariance<R: Real>(
    prior: &DiscreteDistribution<R>,
    source_empirical: &[R],
    target_empirical: &[R],
    lambda: R,
) -> Result<R> {
    check_len(prior.len(), source_empirical.len())?;
    check_len(prior.len(), target_empirical.len())?;
    let x: Vec<R> = source_empirical.iter().map(|&l| (-lambda * l).exp()).collect();
    let y: Vec<R> = target_empirical.iter().map(|&l| (-lambda * l).exp()).collect();
    weighted_covariance(prior, &x, &y)
}

/// Task covariance of task `i` (0-based) against all other tasks:
/// `cov_prior(exp(-λ_T L̂_i), exp(-Σ_{j≠i} λ_j L̂_j))`, with `λ_T` the last entry.
pub fn task_covariance<R: Real>(
    prior: &DiscreteDistribution<R>,
    tables: &[Vec<R>],
    i: usize,
    lambdas: &[R],
) -> Result<R> {
    check_len(tables.len(), lambdas.len())?;
    if i >= tables.len() {
        return Err(Error::IndexOutOfRange {
            what: "task",
            index: i,
            limit: tables.len(),
        });
    }
    if lambdas.iter().any(|&l| !(l > R::zero())) {
        return Err(Error::domain("every λ_j must be positive"));
    }
    for t in tables {
        check_len(prior.len(), t.len())?;
    }
    let lambda_last = *lambdas.last().expect("nonempty");
    let x: Vec<R> = tables[i].iter().map(|&l| (-lambda_last * l).exp()).collect();
    let y: Vec<R> = (0..prior.len())
        .map(|h| {
            let s: R = tables
                .iter()
                .zip(lambdas)
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (t, &l))| l * t[h])
                .sum();
            (-s).exp()
        })
        .collect();
    weighted_covariance(prior, &x, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Two-task oracle inequality for the Gibbs update of a fixed `Q_s`.
    Cor42,
    /// No-forgetting bound under nonnegative task covariance.
    Thm47,
    /// Bound `λK²/(8m) + c/λ` under the high-covariance condition.
    Highcov,
    /// Log-ratio oracle bound for sequential Gibbs posteriors.
    GibbsRatio,
}

impl OracleMode {
    pub const ALL: [OracleMode; 4] = [
        OracleMode::Cor42,
        OracleMode::Thm47,
        OracleMode::Highcov,
        OracleMode::GibbsRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleMode::Cor42 => "cor42",
            OracleMode::Thm47 => "thm47",
            OracleMode::Highcov => "highcov",
            OracleMode::GibbsRatio => "gibbs_ratio",
        }
    }
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OracleMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown oracle mode `{s}`")))
    }
}

/// Settings for [`oracle_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct OracleCheckConfig<R> {
    pub mode: OracleMode,
    /// One λ for every task, or one per task.
    pub lambdas: Vec<R>,
    /// Task whose loss is bounded (0-based). For `cor42` this is the source
    /// task and the last task is the target.
    pub target_task: usize,
    /// Constant of the high-covariance condition (`highcov` only).
    pub c: R,
    pub n_resample: usize,
    pub seed: u64,
}

impl<R: Real> OracleCheckConfig<R> {
    pub fn new(mode: OracleMode, lambda: R) -> Self {
        Self {
            mode,
            lambdas: vec![lambda],
            target_task: 0,
            c: R::lit(0.1),
            n_resample: 2000,
            seed: 0,
        }
    }

    fn per_task_lambdas(&self, n_tasks: usize) -> Result<Vec<R>> {
        let l = match self.lambdas.len() {
            1 => vec![self.lambdas[0]; n_tasks],
            n if n == n_tasks => self.lambdas.clone(),
            n => {
                return Err(Error::VectorLength {
                    expected: n_tasks,
                    got: n,
                })
            }
        };
        if l.iter().any(|&x| !(x > R::zero()) || !x.is_finite()) {
            return Err(Error::domain("every λ must be positive and finite"));
        }
        Ok(l)
    }
}

/// JSON form of a verification result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct OracleCheckReport<R> {
    pub mode: OracleMode,
    pub lhs: R,
    pub rhs: R,
    pub gap: R,
    pub mc_stderr: R,
    pub holds: bool,
    pub violations: usize,
}

impl<R: Real> OracleCheckReport<R> {
    pub fn new(mode: OracleMode, r: &BoundCheckResult<R>) -> Self {
        Self {
            mode,
            lhs: r.lhs,
            rhs: r.rhs,
            gap: r.gap,
            mc_stderr: r.mc_stderr,
            holds: r.holds,
            violations: r.violations,
        }
    }
}

/// Resampling check of an oracle inequality on a finite space.
///
/// The left side is an expectation over a training set and is estimated from
/// `n_resample` draws; right sides are exact except for `gibbs_ratio`, whose
/// right side is itself an expectation and is estimated on the same draws.
/// `thm47` and `highcov` check their covariance condition on every resample and
/// report failures through `violations`.
pub fn oracle_bound_check<R: Real>(
    space: &DiscreteHypothesisSpace<R>,
    cfg: &OracleCheckConfig<R>,
) -> Result<BoundCheckResult<R>> {
    if cfg.n_resample == 0 {
        return Err(Error::domain("n_resample must be at least 1"));
    }
    let n_tasks = space.n_tasks();
    let lambdas = cfg.per_task_lambdas(n_tasks)?;
    let i = cfg.target_task;
    let task_i = space.task(i)?;
    let k = space.k();
    let prior = space.prior();
    let hoeffding = |lambda: R, m: usize| lambda * k * k / (R::lit(8.0) * R::lit(m as f64));

    match cfg.mode {
        OracleMode::Cor42 => {
            let t = n_tasks - 1;
            let lambda = lambdas[t];
            let source = &task_i.loss_means;
            let target = &space.tasks()[t].loss_means;
            let mut lhs = Vec::with_capacity(cfg.n_resample);
            for r in 0..cfg.n_resample {
                let mut g = rng::stream(cfg.seed, r as u64);
                let lhat = space.resample_empirical(t, &mut g)?;
                let q = gibbs_posterior(prior, &lhat, lambda)?;
                lhs.push(q.expect(source)?);
            }
            // inf_Q {L(Q, D_t) + KL(Q‖Q_s)/λ} = -(1/λ) ln E_{Q_s} exp(-λ L_t)
            let neg: Vec<R> = target.iter().map(|&l| -lambda * l).collect();
            let inf_term = -prior.log_expect_exp(&neg)? / lambda;
            let disagreement = disagreement_exact(prior, source, target, lambda)?;
            let rhs = inf_term + hoeffding(lambda, space.tasks()[t].m) + disagreement;
            let (mean, se) = mean_and_stderr(&lhs);
            Ok(BoundCheckResult::new(mean, rhs, se))
        }
        OracleMode::Thm47 | OracleMode::Highcov | OracleMode::GibbsRatio => {
            let lambda_last = *lambdas.last().expect("at least one task");
            if lambdas[i] != lambda_last {
                return Err(Error::domain(
                    "the resampled task must use the same λ as the last task",
                ));
            }
            // Training sets of the other tasks are fixed by the seed.
            let mut fixed = rng::stream(cfg.seed, u64::MAX);
            let mut tables = (0..n_tasks)
                .map(|t| space.resample_empirical(t, &mut fixed))
                .collect::<Result<Vec<_>>>()?;
            let expected_i = &task_i.loss_means;
            let mut lhs = Vec::with_capacity(cfg.n_resample);
            let mut rhs_samples = Vec::new();
            let mut violations = 0;
            for r in 0..cfg.n_resample {
                let mut g = rng::stream(cfg.seed, r as u64);
                tables[i] = space.resample_empirical(i, &mut g)?;
                let q = sequential_gibbs(prior, &tables, &lambdas)?;
                let lhs_r = q.expect(expected_i)?;
                lhs.push(lhs_r);
                match cfg.mode {
                    OracleMode::Thm47 => {
                        if task_covariance(prior, &tables, i, &lambdas)? < R::zero() {
                            violations += 1;
                        }
                    }
                    OracleMode::Highcov => {
                        let cov = task_covariance(prior, &tables, i, &lambdas)?;
                        let x: Vec<R> = tables[i].iter().map(|&l| (-lambda_last * l).exp()).collect();
                        let threshold = (-cfg.c).exp() - prior.expect(&x)?;
                        if cov < R::zero() || cov < threshold {
                            violations += 1;
                        }
                    }
                    OracleMode::GibbsRatio => {
                        let others: Vec<R> = (0..space.n_hyp())
                            .map(|h| {
                                -tables
                                    .iter()
                                    .zip(&lambdas)
                                    .enumerate()
                                    .filter(|(j, _)| *j != i)
                                    .map(|(_, (t, &l))| l * t[h])
                                    .sum::<R>()
                            })
                            .collect();
                        let all: Vec<R> = others
                            .iter()
                            .zip(&tables[i])
                            .map(|(&o, &l)| o - lambdas[i] * l)
                            .collect();
                        let log_ratio = prior.log_expect_exp(&others)? - prior.log_expect_exp(&all)?;
                        rhs_samples.push(hoeffding(lambda_last, task_i.m) + log_ratio / lambda_last);
                    }
                    OracleMode::Cor42 => unreachable!(),
                }
            }
            let (lhs_mean, lhs_se) = mean_and_stderr(&lhs);
            let result = match cfg.mode {
                OracleMode::Thm47 => {
                    let rhs = hoeffding(lambda_last, task_i.m) + prior.expect(expected_i)?;
                    BoundCheckResult::new(lhs_mean, rhs, lhs_se)
                }
                OracleMode::Highcov => {
                    let rhs = hoeffding(lambda_last, task_i.m) + cfg.c / lambda_last;
                    BoundCheckResult::new(lhs_mean, rhs, lhs_se)
                }
                _ => {
                    let gaps: Vec<R> = rhs_samples.iter().zip(&lhs).map(|(&r, &l)| r - l).collect();
                    let (_, gap_se) = mean_and_stderr(&gaps);
                    let (rhs_mean, _) = mean_and_stderr(&rhs_samples);
                    BoundCheckResult::new(lhs_mean, rhs_mean, gap_se)
                }
            };
            Ok(result.with_violations(violations))
        }
    }
}

/// Frequency check of the concentration inequality
/// `ln E_π exp(t(L̂ - L)) < t²K²/(8m) + ln(1/δ)`, which must hold with
/// probability at least `1 - δ` over the training set.
///
/// Returns `lhs` = observed violation rate, `rhs` = δ, and
/// `mc_stderr = sqrt(δ(1-δ)/n)`.
pub fn hoeffding_mgf_check<R: Real>(
    space: &DiscreteHypothesisSpace<R>,
    task: usize,
    t: R,
    n_resample: usize,
    seed: u64,
    delta: R,
) -> Result<BoundCheckResult<R>> {
    if n_resample == 0 {
        return Err(Error::domain("n_resample must be at least 1"));
    }
    if !(delta > R::zero() && delta <= R::one()) {
        return Err(Error::domain("δ must lie in (0, 1]"));
    }
    let spec = space.task(task)?;
    let prior = space.prior();
    let k = space.k();
    let threshold =
        t * t * k * k / (R::lit(8.0) * R::lit(spec.m as f64)) + (R::one() / delta).ln();
    let mut violations = 0usize;
    for r in 0..n_resample {
        let mut g = rng::stream(seed, r as u64);
        let lhat = space.resample_empirical(task, &mut g)?;
        let exponent: Vec<R> = lhat
            .iter()
            .zip(&spec.loss_means)
            .map(|(&e, &l)| t * (e - l))
            .collect();
        if prior.log_expect_exp(&exponent)? >= threshold {
            violations += 1;
        }
    }
    let n = R::lit(n_resample as f64);
    let rate = R::lit(violations as f64) / n;
    let se = (delta * (R::one() - delta) / n).sqrt();
    let mut result = BoundCheckResult::new(rate, delta, se);
    result.violations = violations;
    Ok(result)
}
