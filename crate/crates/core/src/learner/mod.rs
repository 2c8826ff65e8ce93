//! Multi-head MLP, Adam, the variational continual update, and EWC.

pub mod adam;
pub mod ewc;
pub mod gaussian;
pub mod mlp;
pub mod vi;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use ewc::{ewc_posterior, ewc_train_task, fisher_diagonal, EwcConfig, EwcState};
pub use gaussian::{reparam_sample, GaussianMeanField, PosteriorSource, WeightMixture};
pub use mlp::{backward, cross_entropy, forward, gradient_check, Activation, GradientCheck, MlpArchitecture, Network};
pub use vi::{vi_train_task, ViConfig};

use crate::error::Result;
use crate::metrics::{empirical_loss, LossFunction, TaskDataset};
use crate::rng;
use crate::scalar::Real;

/// Expected loss of `q` on `test_set`, averaged over `n_mc` sampled networks.
/// The head is chosen by `test_set.task`.
pub fn evaluate_posterior<R: Real>(
    q: &GaussianMeanField<R>,
    arch: &MlpArchitecture,
    test_set: &TaskDataset<R>,
    loss: &LossFunction<R>,
    n_mc: usize,
    seed: u64,
) -> Result<R> {
    empirical_loss(&PosteriorSource::new(arch, q)?, test_set, loss, n_mc, seed)
}

/// Initial distribution: fan-in uniform means and a constant `log_std`.
pub fn initial_prior<R: Real>(arch: &MlpArchitecture, log_std: R, seed: u64) -> Result<GaussianMeanField<R>> {
    let mean = arch.init_params(&mut rng::stream(seed, 0));
    GaussianMeanField::isotropic(mean, log_std)
}

/// Serialized posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "R: Real")]
pub enum PosteriorCheckpoint<R> {
    Vi {
        arch: MlpArchitecture,
        mean: Vec<R>,
        log_std: Vec<R>,
    },
    Ewc {
        arch: MlpArchitecture,
        weights: Vec<R>,
        fisher_diag: Vec<R>,
        sigma2: R,
        lambda_ewc: R,
    },
}

impl<R: Real> PosteriorCheckpoint<R> {
    pub fn vi(arch: &MlpArchitecture, q: &GaussianMeanField<R>) -> Self {
        PosteriorCheckpoint::Vi {
            arch: arch.clone(),
            mean: q.mean.clone(),
            log_std: q.log_std.clone(),
        }
    }

    pub fn ewc(arch: &MlpArchitecture, s: &EwcState<R>) -> Self {
        PosteriorCheckpoint::Ewc {
            arch: arch.clone(),
            weights: s.weights.clone(),
            fisher_diag: s.fisher_diag.clone(),
            sigma2: s.sigma2,
            lambda_ewc: s.lambda_ewc,
        }
    }

    /// The Gaussian posterior this checkpoint describes.
    pub fn posterior(&self) -> Result<GaussianMeanField<R>> {
        match self {
            PosteriorCheckpoint::Vi { mean, log_std, .. } => GaussianMeanField::new(mean.clone(), log_std.clone()),
            PosteriorCheckpoint::Ewc {
                weights,
                fisher_diag,
                sigma2,
                lambda_ewc,
                ..
            } => {
                let mut s = EwcState::new(weights.clone(), *lambda_ewc, *sigma2)?;
                s.fisher_diag = fisher_diag.clone();
                ewc_posterior(&s)
            }
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
