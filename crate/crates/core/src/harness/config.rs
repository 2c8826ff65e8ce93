use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::DisagreementEstimator;
use crate::error::{Error, Result};
use crate::learner::MlpArchitecture;
use crate::tasks::{EnvironmentConfig, FEATURE_DIM};

/// Default temperature shared by training and the bound.
pub const DEFAULT_LAMBDA: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vi,
    Ewc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vi => "vi",
            Method::Ewc => "ewc",
        }
    }
}

/// One λ for every task, or one per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSchedule {
    Constant(f64),
    PerTask(Vec<f64>),
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant(DEFAULT_LAMBDA)
    }
}

impl LambdaSchedule {
    pub fn at(&self, task: usize) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::PerTask(v) => v[task],
        }
    }

    fn validate(&self, tasks: usize) -> Result<()> {
        let values: &[f64] = match self {
            LambdaSchedule::Constant(l) => std::slice::from_ref(l),
            LambdaSchedule::PerTask(v) => {
                if v.len() != tasks {
                    return Err(Error::Config(format!(
                        "λ schedule has {} entries for {tasks} tasks",
                        v.len()
                    )));
                }
                v
            }
        };
        if values.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("every λ must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden_dims: Vec<usize>,
    pub classes_per_task: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64],
            classes_per_task: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Reparameterized draws per step for the variational learner.
    pub n_mc_train: usize,
    /// Initial `log_std` of the variational prior.
    pub init_log_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            n_mc_train: 1,
            init_log_std: 0.05f64.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwcSettings {
    pub lambda_ewc: f64,
    pub sigma2: f64,
    pub fisher_samples: usize,
}

impl Default for EwcSettings {
    fn default() -> Self {
        Self {
            lambda_ewc: 40.0,
            sigma2: 1e-2,
            fisher_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSettings {
    pub delta: f64,
    pub k: f64,
    pub n_mc: usize,
    pub n_mc_prior: usize,
    pub gamma: f64,
    pub estimator: DisagreementEstimator,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            delta: 0.05,
            k: 1.0,
            n_mc: 30,
            n_mc_prior: 30,
            gamma: 0.95,
            estimator: DisagreementEstimator::Mixture,
        }
    }
}

/// A complete experiment description. Everything except the method and the
/// environment kind has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub environment: EnvironmentConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_m_train")]
    pub m_train: usize,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub lambda: LambdaSchedule,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub ewc: EwcSettings,
    #[serde(default)]
    pub bound: BoundSettings,
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
    /// Where artifacts go; relative paths resolve against the working directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_m_train() -> usize {
    3000
}

fn default_m_test() -> usize {
    1000
}

fn default_stride() -> usize {
    4
}

impl ExperimentConfig {
    pub fn new(method: Method, environment: EnvironmentConfig) -> Self {
        Self {
            method,
            environment,
            seeds: default_seeds(),
            m_train: default_m_train(),
            m_test: default_m_test(),
            arch: ArchConfig::default(),
            lambda: LambdaSchedule::default(),
            training: TrainingConfig::default(),
            ewc: EwcSettings::default(),
            bound: BoundSettings::default(),
            checkpoint_stride: default_stride(),
            output_dir: None,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str_auto(&text)
    }

    pub fn tasks(&self) -> usize {
        self.environment.tasks
    }

    pub fn architecture(&self) -> Result<MlpArchitecture> {
        MlpArchitecture::new(
            FEATURE_DIM,
            self.arch.hidden_dims.clone(),
            self.tasks(),
            self.arch.classes_per_task,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        self.architecture()?;
        self.lambda.validate(self.tasks())?;
        if self.arch.classes_per_task != 2 {
            return Err(Error::Config("binary tasks need classes_per_task = 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.m_train == 0 || self.m_test == 0 {
            return Err(Error::Config("m_train and m_test must be positive".into()));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::Config("checkpoint_stride must be positive".into()));
        }
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || t.n_mc_train == 0 {
            return Err(Error::Config("epochs, batch_size and n_mc_train must be positive".into()));
        }
        if !t.init_log_std.is_finite() {
            return Err(Error::Config("init_log_std must be finite".into()));
        }
        self.adam::<f64>().validate()?;
        if !(self.ewc.lambda_ewc >= 0.0) || !(self.ewc.sigma2 > 0.0) || self.ewc.fisher_samples == 0 {
            return Err(Error::Config("EWC needs λ_ewc ≥ 0, σ² > 0 and fisher_samples ≥ 1".into()));
        }
        self.bound_config::<f64>(0)?.validate()
    }

    pub fn adam<R: crate::scalar::Real>(&self) -> crate::learner::AdamConfig<R> {
        crate::learner::AdamConfig {
            lr: R::lit(self.training.lr),
            beta1: R::lit(self.training.beta1),
            beta2: R::lit(self.training.beta2),
            eps: R::lit(self.training.eps),
        }
    }

    /// Bound settings for the checkpoint whose latest task is `task` (0-based).
    pub fn bound_config<R: crate::scalar::Real>(&self, task: usize) -> Result<crate::bounds::BoundConfig<R>> {
        let b = &self.bound;
        Ok(crate::bounds::BoundConfig {
            lambda: R::lit(self.lambda.at(task)),
            delta: R::lit(b.delta),
            k: R::lit(b.k),
            n_mc: b.n_mc,
            n_mc_prior: b.n_mc_prior,
            gamma: R::lit(b.gamma),
            estimator: b.estimator,
        })
    }

    /// 1-based task counts at which metrics are recorded: every stride, and the last task.
    pub fn checkpoints(&self) -> Vec<usize> {
        let t = self.tasks();
        let mut out: Vec<usize> = (1..=t).filter(|n| n % self.checkpoint_stride == 0).collect();
        if out.last() != Some(&t) {
            out.push(t);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::EnvironmentKind;

    #[test]
    fn bare_toml_gets_defaults() {
        let cfg = ExperimentConfig::from_str_auto(
            r#"
            method = "vi"
            [environment]
            kind = "similar"
            tasks = 100
            "#,
        )
        .unwrap();
        assert_eq!(cfg.m_train, 3000);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.training.batch_size, 16);
        assert_eq!(cfg.ewc.lambda_ewc, 40.0);
        assert_eq!(cfg.checkpoints().first(), Some(&4));
        assert_eq!(cfg.checkpoints().last(), Some(&100));
        assert!((cfg.environment.max_dev - 10f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn json_and_schedules() {
        let cfg = ExperimentConfig::from_str_auto(
            r#"{"method": "ewc", "environment": {"kind": "gradual", "tasks": 3}, "lambda": [1.0, 2.0, 3.0]}"#,
        )
        .unwrap();
        assert_eq!(cfg.lambda.at(2), 3.0);
        assert_eq!(cfg.checkpoints(), vec![3]);
        let bad = r#"{"method": "ewc", "environment": {"kind": "gradual", "tasks": 3}, "lambda": [1.0]}"#;
        assert!(ExperimentConfig::from_str_auto(bad).is_err());
    }

    #[test]
    fn rejects_unknown_and_invalid_fields() {
        assert!(ExperimentConfig::from_str_auto("method = \"vi\"\nbogus = 1\n[environment]\nkind = \"similar\"\ntasks = 2\n").is_err());
        let mut cfg = ExperimentConfig::new(Method::Vi, EnvironmentConfig::new(EnvironmentKind::Similar, 4));
        cfg.bound.delta = 1.5;
        assert!(cfg.validate().is_err());
    }
}
