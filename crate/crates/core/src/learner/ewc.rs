use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::gaussian::GaussianMeanField;
use super::mlp::{MlpArchitecture, Workspace};
use super::vi::{active_indices, epoch_batches};
use crate::error::{check_len, Error, Result};
use crate::metrics::TaskDataset;
use crate::numerics::log_sum_exp;
use crate::rng;
use crate::scalar::Real;

/// Anchor weights, accumulated Fisher diagonal, and the penalty / noise scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct EwcState<R> {
    pub weights: Vec<R>,
    pub fisher_diag: Vec<R>,
    pub lambda_ewc: R,
    /// Variance of the isotropic noise that turns the weights into a posterior.
    pub sigma2: R,
}

impl<R: Real> EwcState<R> {
    /// Fresh state with zero Fisher information.
    pub fn new(weights: Vec<R>, lambda_ewc: R, sigma2: R) -> Result<Self> {
        if !(lambda_ewc >= R::zero()) || !lambda_ewc.is_finite() {
            return Err(Error::Config("λ_ewc must be finite and nonnegative".into()));
        }
        if !(sigma2 > R::zero()) || !sigma2.is_finite() {
            return Err(Error::Config("σ² must be positive and finite".into()));
        }
        let d = weights.len();
        Ok(Self {
            weights,
            fisher_diag: vec![R::zero(); d],
            lambda_ewc,
            sigma2,
        })
    }

    /// `(λ_ewc/2) Σ_j F_j (w_j - anchor_j)²`.
    pub fn penalty(&self, w: &[R]) -> Result<R> {
        check_len(self.weights.len(), w.len())?;
        let s: R = w
            .iter()
            .zip(&self.weights)
            .zip(&self.fisher_diag)
            .map(|((&a, &b), &f)| f * (a - b) * (a - b))
            .sum();
        Ok(self.lambda_ewc * R::lit(0.5) * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct EwcConfig<R> {
    pub epochs: usize,
    pub batch_size: usize,
    /// Rows used to estimate each task's Fisher diagonal (capped at `m`).
    pub fisher_samples: usize,
    pub adam: AdamConfig<R>,
}

impl<R: Real> Default for EwcConfig<R> {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 16,
            fisher_samples: 1000,
            adam: AdamConfig::default(),
        }
    }
}

impl<R: Real> EwcConfig<R> {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.fisher_samples == 0 {
            return Err(Error::Config("batch_size and fisher_samples must be positive".into()));
        }
        self.adam.validate()
    }
}

/// Mean over `n_samples` rows of the squared gradient of `ln p(ŷ | x)`, with
/// `ŷ` drawn from the model's own predictive distribution. Coordinates outside
/// the trunk and the task's head are zero.
pub fn fisher_diagonal<R: Real>(
    params: &[R],
    arch: &MlpArchitecture,
    data: &TaskDataset<R>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<R>> {
    check_len(arch.n_params(), params.len())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_samples == 0 || n_samples > data.m() {
        return Err(Error::domain("Fisher sample count must lie in 1..=m"));
    }
    let task = data.task;
    let ranges = arch.active_ranges(task)?;
    let idx = active_indices(arch, task)?;
    let mut ws = Workspace::new(arch, task)?;
    let mut g = rng::stream(seed, 0);
    let mut rows: Vec<usize> = (0..data.m()).collect();
    rows.shuffle(&mut g);
    let mut fisher = vec![R::zero(); params.len()];
    let mut grad = vec![R::zero(); params.len()];
    let scale = R::one() / R::lit(n_samples as f64);
    for &i in &rows[..n_samples] {
        let x = data.features.row(i);
        let logits = ws.forward_row(params, x);
        let lse = log_sum_exp(logits);
        let u = R::unit_uniform(&mut g);
        let mut acc = R::zero();
        let mut label = logits.len() - 1;
        for (c, &z) in logits.iter().enumerate() {
            acc += (z - lse).exp();
            if u < acc {
                label = c;
                break;
            }
        }
        for r in &ranges {
            grad[r.clone()].iter_mut().for_each(|v| *v = R::zero());
        }
        ws.accumulate_ce_grad(params, x, label, R::one(), &mut grad);
        for &j in &idx {
            fisher[j] += scale * grad[j] * grad[j];
        }
    }
    Ok(fisher)
}

/// Trains on one task against the EWC penalty anchored at `state.weights`,
/// then adds the task's Fisher diagonal and moves the anchor to the new weights.
pub fn ewc_train_task<R: Real>(
    state: &EwcState<R>,
    arch: &MlpArchitecture,
    data: &TaskDataset<R>,
    cfg: &EwcConfig<R>,
    seed: u64,
) -> Result<EwcState<R>> {
    cfg.validate()?;
    check_len(arch.n_params(), state.weights.len())?;
    check_len(arch.n_params(), state.fisher_diag.len())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_labels(arch.classes_per_task)?;
    let task = data.task;
    let idx = active_indices(arch, task)?;
    let ranges = arch.active_ranges(task)?;
    let mut packed: Vec<R> = idx.iter().map(|&j| state.weights[j]).collect();
    let anchor = packed.clone();
    let penalty_weight: Vec<R> = idx.iter().map(|&j| state.lambda_ewc * state.fisher_diag[j]).collect();
    let mut adam = AdamState::new(cfg.adam, idx.len());
    let mut params = state.weights.clone();
    let mut grad_full = vec![R::zero(); params.len()];
    let mut grad = vec![R::zero(); idx.len()];
    let mut ws = Workspace::new(arch, task)?;
    let mut g = rng::stream(seed, 0);

    for _ in 0..cfg.epochs {
        for batch in epoch_batches(data.m(), cfg.batch_size, &mut g) {
            for (k, &j) in idx.iter().enumerate() {
                params[j] = packed[k];
            }
            for r in &ranges {
                grad_full[r.clone()].iter_mut().for_each(|v| *v = R::zero());
            }
            let scale = R::one() / R::lit(batch.len() as f64);
            let mut loss = R::zero();
            for &i in &batch {
                loss += ws.accumulate_ce_grad(&params, data.features.row(i), data.labels[i], scale, &mut grad_full);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss on task {task}")));
            }
            for (k, &j) in idx.iter().enumerate() {
                grad[k] = grad_full[j] + penalty_weight[k] * (packed[k] - anchor[k]);
            }
            adam.update(&mut packed, &grad)?;
        }
    }
    if packed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(format!("non-finite weights on task {task}")));
    }
    for (k, &j) in idx.iter().enumerate() {
        params[j] = packed[k];
    }
    let n_fisher = cfg.fisher_samples.min(data.m());
    let fisher = fisher_diagonal(&params, arch, data, n_fisher, rng::derive_seed(seed, 1))?;
    let mut next = state.clone();
    next.weights = params;
    for (f, add) in next.fisher_diag.iter_mut().zip(fisher) {
        *f += add;
    }
    Ok(next)
}

/// `N(w, σ² I)` around the current weights.
pub fn ewc_posterior<R: Real>(state: &EwcState<R>) -> Result<GaussianMeanField<R>> {
    if !(state.sigma2 > R::zero()) {
        return Err(Error::domain("σ² must be positive"));
    }
    GaussianMeanField::isotropic(state.weights.clone(), R::lit(0.5) * state.sigma2.ln())
}
