use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpArchitecture, Network};
use crate::bounds::{kl_gaussian_diag, PosteriorFamily};
use crate::error::{check_len, Error, Result};
use crate::metrics::HypothesisSource;
use crate::oracle::{kl_discrete, DiscreteDistribution};
use crate::rng::{self, SimRng};
use crate::scalar::Real;

/// Diagonal Gaussian over the flat parameter vector.
///
/// `log_std` may be `-inf` in coordinates that are point masses; such
/// posteriors are valid for sampling and KL but do not round-trip through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct GaussianMeanField<R> {
    pub mean: Vec<R>,
    pub log_std: Vec<R>,
}

impl<R: Real> GaussianMeanField<R> {
    /// Requires finite entries of equal length.
    pub fn new(mean: Vec<R>, log_std: Vec<R>) -> Result<Self> {
        check_len(mean.len(), log_std.len())?;
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::domain("Gaussian parameters must be finite"));
        }
        Ok(Self { mean, log_std })
    }

    /// Same standard deviation in every coordinate.
    pub fn isotropic(mean: Vec<R>, log_std: R) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![log_std; d])
    }

    /// Zero-variance distribution at `mean`.
    pub fn point_mass(mean: Vec<R>) -> Self {
        let d = mean.len();
        Self {
            mean,
            log_std: vec![R::neg_infinity(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_point_mass(&self) -> bool {
        self.log_std.iter().all(|&s| s == R::neg_infinity())
    }

    /// `mean + exp(log_std) ⊙ ε` with `ε ~ N(0, I)`, drawing `ε` from `rng`.
    pub fn sample_with(&self, rng: &mut SimRng) -> Vec<R> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &s)| {
                let e = R::standard_normal(rng);
                if s == R::neg_infinity() {
                    m
                } else {
                    m + s.exp() * e
                }
            })
            .collect()
    }

    /// `ln self(w) - ln other(w)`. Coordinates where both agree are skipped,
    /// so shared point masses are allowed.
    pub fn log_density_ratio(&self, other: &Self, w: &[R]) -> Result<R> {
        check_len(self.dim(), other.dim())?;
        check_len(self.dim(), w.len())?;
        let half = R::lit(0.5);
        let mut acc = R::zero();
        for i in 0..self.dim() {
            let (m1, s1, m2, s2) = (self.mean[i], self.log_std[i], other.mean[i], other.log_std[i]);
            if m1 == m2 && s1 == s2 {
                continue;
            }
            if s1 == R::neg_infinity() || s2 == R::neg_infinity() {
                return Err(Error::domain("point-mass coordinates must coincide"));
            }
            let z1 = (w[i] - m1) * (-s1).exp();
            let z2 = (w[i] - m2) * (-s2).exp();
            acc += s2 - s1 + half * (z2 * z2 - z1 * z1);
        }
        Ok(acc)
    }

    /// `KL(self ‖ other)`.
    pub fn kl_to(&self, other: &Self) -> Result<R> {
        kl_gaussian_diag(&self.mean, &self.log_std, &other.mean, &other.log_std)
    }
}

/// One reparameterized draw, deterministic in `seed`.
pub fn reparam_sample<R: Real>(q: &GaussianMeanField<R>, seed: u64) -> Vec<R> {
    q.sample_with(&mut rng::stream(seed, 0))
}

/// A Gaussian posterior viewed as a distribution over networks.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorSource<'a, R> {
    pub arch: &'a MlpArchitecture,
    pub q: &'a GaussianMeanField<R>,
}

impl<'a, R: Real> PosteriorSource<'a, R> {
    pub fn new(arch: &'a MlpArchitecture, q: &'a GaussianMeanField<R>) -> Result<Self> {
        check_len(arch.n_params(), q.dim())?;
        Ok(Self { arch, q })
    }
}

impl<'a, R: Real> HypothesisSource<R> for PosteriorSource<'a, R> {
    type Draw = Network<'a, R>;

    fn draw(&self, rng: &mut SimRng) -> Network<'a, R> {
        Network {
            arch: self.arch,
            params: self.q.sample_with(rng),
        }
    }

    fn is_point(&self) -> bool {
        self.q.is_point_mass()
    }
}

impl<R: Real> PosteriorFamily<R> for PosteriorSource<'_, R> {
    fn kl_divergence(&self, other: &Self) -> Result<R> {
        self.q.kl_to(other.q)
    }

    fn log_density_ratio(&self, other: &Self, h: &Network<'_, R>) -> Result<R> {
        self.q.log_density_ratio(other.q, &h.params)
    }
}

/// A posterior supported on finitely many weight vectors.
#[derive(Debug, Clone)]
pub struct WeightMixture<'a, R> {
    pub arch: &'a MlpArchitecture,
    pub atoms: Vec<Vec<R>>,
    pub weights: DiscreteDistribution<R>,
}

impl<'a, R: Real> WeightMixture<'a, R> {
    pub fn new(arch: &'a MlpArchitecture, atoms: Vec<Vec<R>>, weights: DiscreteDistribution<R>) -> Result<Self> {
        check_len(atoms.len(), weights.len())?;
        for a in &atoms {
            check_len(arch.n_params(), a.len())?;
        }
        Ok(Self { arch, atoms, weights })
    }
}

impl<'a, R: Real> HypothesisSource<R> for WeightMixture<'a, R> {
    type Draw = Network<'a, R>;

    fn draw(&self, rng: &mut SimRng) -> Network<'a, R> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = self.atoms.len() - 1;
        for (i, w) in self.weights.weights().iter().enumerate() {
            acc += w.to_f64_lossy();
            if u < acc {
                pick = i;
                break;
            }
        }
        Network {
            arch: self.arch,
            params: self.atoms[pick].clone(),
        }
    }

    fn is_point(&self) -> bool {
        self.weights.weights().iter().filter(|&&w| w > R::zero()).count() == 1
    }
}

impl<R: Real> PosteriorFamily<R> for WeightMixture<'_, R> {
    /// KL between mixtures over the same atoms.
    fn kl_divergence(&self, other: &Self) -> Result<R> {
        if self.atoms != other.atoms {
            return Err(Error::domain("mixtures must share their atoms"));
        }
        kl_discrete(&self.weights, &other.weights)
    }

    fn log_density_ratio(&self, other: &Self, h: &Network<'_, R>) -> Result<R> {
        if self.atoms != other.atoms {
            return Err(Error::domain("mixtures must share their atoms"));
        }
        let i = self
            .atoms
            .iter()
            .position(|a| *a == h.params)
            .ok_or_else(|| Error::domain("draw is not an atom of the mixture"))?;
        Ok(self.weights.weights()[i].ln() - other.weights.weights()[i].ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_sample_is_the_mean() {
        let q = GaussianMeanField::point_mass(vec![0.5_f64, -1.0, 2.0]);
        assert_eq!(reparam_sample(&q, 9), q.mean);
    }

    #[test]
    fn fixed_seed_repeats() {
        let q = GaussianMeanField::isotropic(vec![0.0_f64; 5], -1.0).unwrap();
        assert_eq!(reparam_sample(&q, 4), reparam_sample(&q, 4));
        assert_ne!(reparam_sample(&q, 4), reparam_sample(&q, 5));
    }

    #[test]
    fn sample_mean_concentrates() {
        let q = GaussianMeanField::new(vec![1.0_f64, -2.0], vec![0.0, 1.0f64.ln()]).unwrap();
        let mut r = rng::stream(1, 0);
        let n = 10_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let s = q.sample_with(&mut r);
            sums[0] += s[0];
            sums[1] += s[1];
        }
        for j in 0..2 {
            let sd = q.log_std[j].exp();
            assert!((sums[j] / n as f64 - q.mean[j]).abs() < 3.0 * sd / 100.0);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(GaussianMeanField::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(GaussianMeanField::new(vec![0.0_f64], vec![0.0, 1.0]).is_err());
    }
}
