use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::gaussian::GaussianMeanField;
use super::mlp::{MlpArchitecture, Workspace};
use crate::error::{check_len, Error, Result};
use crate::metrics::TaskDataset;
use crate::rng;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ViConfig<R> {
    /// The objective is `L̂(Q, S) + KL(Q‖prior)/λ`.
    pub lambda: R,
    pub epochs: usize,
    pub batch_size: usize,
    /// Reparameterized draws per batch step.
    pub n_mc_train: usize,
    pub adam: AdamConfig<R>,
}

impl<R: Real> ViConfig<R> {
    pub fn new(lambda: R) -> Self {
        Self {
            lambda,
            epochs: 1,
            batch_size: 16,
            n_mc_train: 1,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > R::zero()) || !self.lambda.is_finite() {
            return Err(Error::Config("λ must be positive and finite".into()));
        }
        if self.batch_size == 0 || self.n_mc_train == 0 {
            return Err(Error::Config("batch_size and n_mc_train must be positive".into()));
        }
        self.adam.validate()
    }
}

/// Indices of the trunk and the task's head, in parameter order.
pub(crate) fn active_indices(arch: &MlpArchitecture, task: usize) -> Result<Vec<usize>> {
    Ok(arch.active_ranges(task)?.into_iter().flatten().collect())
}

/// Shuffled minibatches of `0..m`, one shuffle per epoch.
pub(crate) fn epoch_batches(m: usize, batch_size: usize, rng: &mut rng::SimRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Approximately minimizes `L̂(Q, S_t) + KL(Q‖prior)/λ` over diagonal
/// Gaussians, starting from the prior, with cross-entropy as the training loss.
///
/// Only the trunk and the head of `data.task` are updated; every other
/// coordinate of the result equals the prior's.
pub fn vi_train_task<R: Real>(
    prior: &GaussianMeanField<R>,
    arch: &MlpArchitecture,
    data: &TaskDataset<R>,
    cfg: &ViConfig<R>,
    seed: u64,
) -> Result<GaussianMeanField<R>> {
    cfg.validate()?;
    check_len(arch.n_params(), prior.dim())?;
    if prior.mean.iter().chain(&prior.log_std).any(|v| !v.is_finite()) {
        return Err(Error::domain("prior parameters must be finite"));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_labels(arch.classes_per_task)?;
    if data.features.cols() != arch.input_dim {
        return Err(Error::VectorLength {
            expected: arch.input_dim,
            got: data.features.cols(),
        });
    }
    let task = data.task;
    let idx = active_indices(arch, task)?;
    let ranges = arch.active_ranges(task)?;
    let na = idx.len();

    let mut packed: Vec<R> = idx
        .iter()
        .map(|&j| prior.mean[j])
        .chain(idx.iter().map(|&j| prior.log_std[j]))
        .collect();
    let prior_mean: Vec<R> = idx.iter().map(|&j| prior.mean[j]).collect();
    let prior_ls: Vec<R> = idx.iter().map(|&j| prior.log_std[j]).collect();
    let prior_inv_var: Vec<R> = prior_ls.iter().map(|&s| (R::lit(-2.0) * s).exp()).collect();

    let mut adam = AdamState::new(cfg.adam, 2 * na);
    let mut params = prior.mean.clone();
    let mut grad_full = vec![R::zero(); params.len()];
    let mut grad = vec![R::zero(); 2 * na];
    let mut eps = vec![R::zero(); na];
    let mut ws = Workspace::new(arch, task)?;
    let mut g = rng::stream(seed, 0);
    let inv_lambda = R::one() / cfg.lambda;

    for _ in 0..cfg.epochs {
        for batch in epoch_batches(data.m(), cfg.batch_size, &mut g) {
            grad.iter_mut().for_each(|v| *v = R::zero());
            let scale = R::one() / R::lit((batch.len() * cfg.n_mc_train) as f64);
            let mut loss = R::zero();
            for _ in 0..cfg.n_mc_train {
                for (k, &j) in idx.iter().enumerate() {
                    eps[k] = R::standard_normal(&mut g);
                    params[j] = packed[k] + packed[na + k].exp() * eps[k];
                }
                for r in &ranges {
                    grad_full[r.clone()].iter_mut().for_each(|v| *v = R::zero());
                }
                for &i in &batch {
                    loss += ws.accumulate_ce_grad(&params, data.features.row(i), data.labels[i], scale, &mut grad_full);
                }
                for (k, &j) in idx.iter().enumerate() {
                    let gw = grad_full[j];
                    grad[k] += gw;
                    grad[na + k] += gw * eps[k] * packed[na + k].exp();
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss on task {task}")));
            }
            for k in 0..na {
                let mu = packed[k];
                let ls = packed[na + k];
                grad[k] += (mu - prior_mean[k]) * prior_inv_var[k] * inv_lambda;
                grad[na + k] += ((R::lit(2.0) * (ls - prior_ls[k])).exp() - R::one()) * inv_lambda;
            }
            adam.update(&mut packed, &grad)?;
        }
    }
    if packed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(format!("non-finite posterior parameters on task {task}")));
    }
    let mut q = prior.clone();
    for (k, &j) in idx.iter().enumerate() {
        q.mean[j] = packed[k];
        q.log_std[j] = packed[na + k];
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{evaluate_posterior, initial_prior};
    use crate::metrics::LossFunction;
    use crate::tasks::{sample_task, TaskSpec};

    fn task(task: usize, angle: f64, m: usize, seed: u64) -> (TaskDataset<f64>, TaskDataset<f64>) {
        sample_task(&TaskSpec {
            task,
            angle,
            m_train: m,
            m_test: 500,
            seed,
        })
        .unwrap()
    }

    fn setup(n_tasks: usize) -> (MlpArchitecture, GaussianMeanField<f64>) {
        let arch = MlpArchitecture::new(10, vec![16], n_tasks, 2).unwrap();
        let prior = initial_prior(&arch, 0.05f64.ln(), 3).unwrap();
        (arch, prior)
    }

    #[test]
    fn tiny_lambda_stays_at_the_prior() {
        let (arch, prior) = setup(1);
        let (train, _) = task(0, 0.3, 400, 1);
        let q = vi_train_task(&prior, &arch, &train, &ViConfig::new(1e-6), 5).unwrap();
        let dm = q.mean.iter().zip(&prior.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ds = q.log_std.iter().zip(&prior.log_std).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dm < 1e-2 && ds < 1e-2, "{dm} {ds}");
    }

    #[test]
    fn learns_a_separable_task() {
        let (arch, prior) = setup(1);
        let (train, test) = task(0, 0.7, 3000, 2);
        let mut cfg = ViConfig::new(1e4);
        cfg.epochs = 3;
        cfg.adam.lr = 1e-2;
        let q = vi_train_task(&prior, &arch, &train, &cfg, 9).unwrap();
        let err = evaluate_posterior(&q, &arch, &test, &LossFunction::zero_one(), 20, 4).unwrap();
        assert!(err < 0.05, "test error {err}");
    }

    #[test]
    fn deterministic_and_head_isolated() {
        let (arch, prior) = setup(3);
        let (train, _) = task(1, -0.2, 300, 4);
        let cfg = ViConfig::new(300.0);
        let a = vi_train_task(&prior, &arch, &train, &cfg, 11).unwrap();
        let b = vi_train_task(&prior, &arch, &train, &cfg, 11).unwrap();
        assert_eq!(a, b);
        for t in [0, 2] {
            let r = arch.head_range(t).unwrap();
            assert_eq!(a.mean[r.clone()], prior.mean[r.clone()]);
            assert_eq!(a.log_std[r.clone()], prior.log_std[r]);
        }
        let r = arch.head_range(1).unwrap();
        assert_ne!(a.mean[r.clone()], prior.mean[r]);
    }

    #[test]
    fn kl_grows_with_lambda() {
        let (arch, prior) = setup(1);
        let (train, _) = task(0, 1.1, 1000, 6);
        let kl = |lambda: f64| {
            let q = vi_train_task(&prior, &arch, &train, &ViConfig::new(lambda), 8).unwrap();
            q.kl_to(&prior).unwrap()
        };
        let (small, large) = (kl(1.0), kl(1e4));
        assert!(small < large, "{small} vs {large}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (arch, prior) = setup(1);
        let (train, _) = task(0, 0.0, 50, 1);
        assert!(vi_train_task(&prior, &arch, &train, &ViConfig::new(0.0), 1).is_err());
        let (other, _) = task(1, 0.0, 50, 1);
        assert!(vi_train_task(&prior, &arch, &other, &ViConfig::new(1.0), 1).is_err());
        let short = GaussianMeanField::isotropic(vec![0.0; 3], 0.0).unwrap();
        assert!(vi_train_task(&short, &arch, &train, &ViConfig::new(1.0), 1).is_err());
    }
}
