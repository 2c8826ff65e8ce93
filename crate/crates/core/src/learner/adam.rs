use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct AdamConfig<R> {
    #[serde(default = "defaults::lr")]
    pub lr: R,
    #[serde(default = "defaults::beta1")]
    pub beta1: R,
    #[serde(default = "defaults::beta2")]
    pub beta2: R,
    #[serde(default = "defaults::eps")]
    pub eps: R,
}

mod defaults {
    use crate::scalar::Real;

    pub fn lr<R: Real>() -> R {
        R::lit(1e-3)
    }
    pub fn beta1<R: Real>() -> R {
        R::lit(0.9)
    }
    pub fn beta2<R: Real>() -> R {
        R::lit(0.999)
    }
    pub fn eps<R: Real>() -> R {
        R::lit(1e-8)
    }
}

impl<R: Real> Default for AdamConfig<R> {
    fn default() -> Self {
        Self {
            lr: defaults::lr(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            eps: defaults::eps(),
        }
    }
}

impl<R: Real> AdamConfig<R> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: R| b >= R::zero() && b < R::one();
        if !(self.lr > R::zero()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > R::zero()) {
            return Err(Error::Config(
                "Adam needs lr > 0, β in [0, 1) and ε > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct AdamState<R> {
    pub config: AdamConfig<R>,
    pub step: u64,
    pub m: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> AdamState<R> {
    pub fn new(config: AdamConfig<R>, dim: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![R::zero(); dim],
            v: vec![R::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// One descent step `params -= lr · m̂ / (sqrt(v̂) + ε)`.
    pub fn update(&mut self, params: &mut [R], grad: &[R]) -> Result<()> {
        check_len(self.dim(), params.len())?;
        check_len(self.dim(), grad.len())?;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = R::one() - beta1.powi(t);
        let c2 = R::one() - beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (R::one() - beta1) * g;
            *v = beta2 * *v + (R::one() - beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}
