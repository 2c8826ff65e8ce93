use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One task over a finite hypothesis space: sample size and expected losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct DiscreteTask<R> {
    pub m: usize,
    /// Expected loss `L(h, D)` of every hypothesis, in `[0, K]`.
    pub loss_means: Vec<R>,
}

/// A finite hypothesis space with per-task expected losses and a resamplable
/// data model.
///
/// Datum `j` of a training set is a uniform draw `u_j`, and hypothesis `h`
/// pays `K · 1[u_j < L(h)/K]` on it. Each `L̂(h, S)` is then `K/m` times a
/// Binomial(m, L(h)/K) count with mean `L(h)`, and all hypotheses share the
/// same data, so `L̂` is monotone in `L` within every resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", try_from = "SpaceDocument<R>", into = "SpaceDocument<R>")]
pub struct DiscreteHypothesisSpace<R> {
    k: R,
    prior: DiscreteDistribution<R>,
    tasks: Vec<DiscreteTask<R>>,
}

/// On-disk JSON form: `{K, n_hyp, tasks: [{m, loss_means}], prior}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct SpaceDocument<R> {
    #[serde(rename = "K")]
    pub k: R,
    pub n_hyp: usize,
    pub tasks: Vec<DiscreteTask<R>>,
    pub prior: Vec<R>,
}

impl<R: Real> TryFrom<SpaceDocument<R>> for DiscreteHypothesisSpace<R> {
    type Error = Error;

    fn try_from(doc: SpaceDocument<R>) -> Result<Self> {
        if doc.prior.len() != doc.n_hyp {
            return Err(Error::VectorLength {
                expected: doc.n_hyp,
                got: doc.prior.len(),
            });
        }
        Self::new(doc.k, DiscreteDistribution::new(doc.prior)?, doc.tasks)
    }
}

impl<R: Real> From<DiscreteHypothesisSpace<R>> for SpaceDocument<R> {
    fn from(s: DiscreteHypothesisSpace<R>) -> Self {
        SpaceDocument {
            k: s.k,
            n_hyp: s.prior.len(),
            tasks: s.tasks,
            prior: s.prior.into(),
        }
    }
}

impl<R: Real> DiscreteHypothesisSpace<R> {
    pub fn new(k: R, prior: DiscreteDistribution<R>, tasks: Vec<DiscreteTask<R>>) -> Result<Self> {
        if !(k >= R::zero()) || !k.is_finite() {
            return Err(Error::domain("loss bound K must be finite and nonnegative"));
        }
        if tasks.is_empty() {
            return Err(Error::domain("hypothesis space needs at least one task"));
        }
        for (t, task) in tasks.iter().enumerate() {
            if task.m == 0 {
                return Err(Error::domain(format!("task {t} has m = 0")));
            }
            if task.loss_means.len() != prior.len() {
                return Err(Error::VectorLength {
                    expected: prior.len(),
                    got: task.loss_means.len(),
                });
            }
            if task
                .loss_means
                .iter()
                .any(|&l| !(l >= R::zero() && l <= k))
            {
                return Err(Error::domain(format!("task {t} has a loss outside [0, K]")));
            }
        }
        Ok(Self { k, prior, tasks })
    }

    /// Every task shares one loss table and sample size.
    pub fn identical_tasks(
        k: R,
        prior: DiscreteDistribution<R>,
        loss_means: Vec<R>,
        m: usize,
        n_tasks: usize,
    ) -> Result<Self> {
        let task = DiscreteTask { m, loss_means };
        Self::new(k, prior, vec![task; n_tasks])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    #[inline]
    pub fn k(&self) -> R {
        self.k
    }

    #[inline]
    pub fn n_hyp(&self) -> usize {
        self.prior.len()
    }

    #[inline]
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn prior(&self) -> &DiscreteDistribution<R> {
        &self.prior
    }

    pub fn tasks(&self) -> &[DiscreteTask<R>] {
        &self.tasks
    }

    pub fn task(&self, t: usize) -> Result<&DiscreteTask<R>> {
        self.tasks.get(t).ok_or(Error::IndexOutOfRange {
            what: "task",
            index: t,
            limit: self.tasks.len(),
        })
    }

    /// Draws a training set for task `t` and returns `L̂(h, S)` for every `h`.
    pub fn resample_empirical<G: Rng + ?Sized>(&self, t: usize, rng: &mut G) -> Result<Vec<R>> {
        let task = self.task(t)?;
        let mut draws: Vec<R> = (0..task.m).map(|_| R::unit_uniform(rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("uniform draws are finite"));
        let scale = self.k / R::lit(task.m as f64);
        let out = task
            .loss_means
            .iter()
            .map(|&mean| {
                if self.k == R::zero() {
                    return R::zero();
                }
                let p = mean / self.k;
                let count = draws.partition_point(|&u| u < p);
                scale * R::lit(count as f64)
            })
            .collect();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn space() -> DiscreteHypothesisSpace<f64> {
        let prior = DiscreteDistribution::uniform(3).unwrap();
        DiscreteHypothesisSpace::new(
            1.0,
            prior,
            vec![
                DiscreteTask { m: 50, loss_means: vec![0.1, 0.5, 0.9] },
                DiscreteTask { m: 20, loss_means: vec![0.0, 1.0, 0.3] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_and_shape() {
        let s = space();
        let text = s.to_json_string().unwrap();
        assert!(text.contains("\"K\""));
        assert!(text.contains("\"n_hyp\": 3"));
        assert_eq!(DiscreteHypothesisSpace::from_json_str(&text).unwrap(), s);
    }

    #[test]
    fn json_validation() {
        let bad_len = r#"{"K": 1.0, "n_hyp": 2, "tasks": [{"m": 5, "loss_means": [0.1]}], "prior": [0.5, 0.5]}"#;
        assert!(DiscreteHypothesisSpace::<f64>::from_json_str(bad_len).is_err());
        let bad_range = r#"{"K": 1.0, "n_hyp": 1, "tasks": [{"m": 5, "loss_means": [1.5]}], "prior": [1.0]}"#;
        assert!(DiscreteHypothesisSpace::<f64>::from_json_str(bad_range).is_err());
        let bad_prior = r#"{"K": 1.0, "n_hyp": 1, "tasks": [{"m": 5, "loss_means": [0.5]}], "prior": [0.4]}"#;
        assert!(DiscreteHypothesisSpace::<f64>::from_json_str(bad_prior).is_err());
    }

    #[test]
    fn resampled_losses_are_unbiased_and_monotone() {
        let s = space();
        let mut r = rng::stream(11, 0);
        let n = 20_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let l = s.resample_empirical(0, &mut r).unwrap();
            assert!(l[0] <= l[1] && l[1] <= l[2]);
            for h in 0..3 {
                sums[h] += l[h];
            }
        }
        for (h, &mean) in [0.1, 0.5, 0.9].iter().enumerate() {
            let est = sums[h] / n as f64;
            let se = (mean * (1.0 - mean) / 50.0 / n as f64).sqrt();
            assert!((est - mean).abs() < 4.0 * se, "h={h}: {est} vs {mean}");
        }
    }

    #[test]
    fn extreme_means_are_deterministic() {
        let s = space();
        let mut r = rng::stream(3, 0);
        for _ in 0..100 {
            let l = s.resample_empirical(1, &mut r).unwrap();
            assert_eq!(l[0], 0.0);
            assert_eq!(l[1], 1.0);
        }
    }
}
