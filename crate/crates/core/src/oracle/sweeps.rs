//! Randomized property sweeps over small finite spaces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checks::{change_of_measure_check, forgetting_bound_exact};
use super::distribution::{gibbs_objective, gibbs_posterior, sequential_gibbs, DiscreteDistribution};
use crate::error::Result;
use crate::rng::{self, SimRng};
use crate::scalar::Real;

/// Worst case over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Smallest `rhs - lhs` (or largest distance, for distance sweeps).
    pub worst: f64,
    pub tolerance: f64,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_distribution<R: Real>(rng: &mut SimRng, n: usize, sparse: bool) -> DiscreteDistribution<R> {
    loop {
        let mass: Vec<R> = (0..n)
            .map(|_| {
                if sparse && rng.gen_bool(0.25) {
                    R::zero()
                } else {
                    // log-uniform masses spread over several orders of magnitude
                    R::lit((rng.gen_range(-6.0..0.0f64)).exp())
                }
            })
            .collect();
        if let Ok(d) = DiscreteDistribution::from_unnormalized(mass) {
            return d;
        }
    }
}

/// Support of `q` restricted to that of `p`, renormalized.
fn restrict_to<R: Real>(q: &DiscreteDistribution<R>, p: &DiscreteDistribution<R>) -> DiscreteDistribution<R> {
    let mass: Vec<R> = q
        .weights()
        .iter()
        .zip(p.weights())
        .map(|(&a, &b)| if b > R::zero() { a } else { R::zero() })
        .collect();
    DiscreteDistribution::from_unnormalized(mass).unwrap_or_else(|_| p.clone())
}

fn random_losses<R: Real>(rng: &mut SimRng, n: usize, k: f64) -> Vec<R> {
    (0..n).map(|_| R::lit(rng.gen_range(0.0..=k))).collect()
}

/// Change-of-measure validity on random instances plus the equality case at
/// the optimal tilt.
pub fn change_of_measure_sweep<R: Real>(instances: usize, seed: u64) -> Result<[SweepSummary; 2]> {
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    let mut worst_eq = 0.0f64;
    let mut failures_eq = 0;
    for i in 0..instances {
        let mut g = rng::stream(seed, i as u64);
        let n = g.gen_range(2..=20);
        let pi = random_distribution::<R>(&mut g, n, true);
        let rho = restrict_to(&random_distribution::<R>(&mut g, n, true), &pi);
        let lambda = R::lit(g.gen_range(0.01..20.0) * if g.gen_bool(0.2) { -1.0 } else { 1.0 });
        let f: Vec<R> = (0..n).map(|_| R::lit(g.gen_range(-3.0..3.0))).collect();
        let gap = change_of_measure_check(&rho, &pi, &f, lambda)?.gap.to_f64_lossy();
        worst = worst.min(gap);
        if gap < -1e-12 {
            failures += 1;
        }

        // Equality holds at f = c + (1/λ) ln(dρ/dπ) when ρ and π share a support.
        let c = g.gen_range(-1.0..1.0);
        let rho_full = restrict_to(&random_distribution::<R>(&mut g, n, false), &pi);
        let tilt_full: Vec<R> = rho_full
            .weights()
            .iter()
            .zip(pi.weights())
            .map(|(&r, &p)| {
                if p > R::zero() {
                    R::lit(c) + (r.ln() - p.ln()) / lambda
                } else {
                    R::zero()
                }
            })
            .collect();
        let gap_eq = change_of_measure_check(&rho_full, &pi, &tilt_full, lambda)?
            .gap
            .to_f64_lossy()
            .abs();
        worst_eq = worst_eq.max(gap_eq);
        if gap_eq >= 1e-10 {
            failures_eq += 1;
        }
    }
    Ok([
        SweepSummary {
            name: "change-of-measure".into(),
            instances,
            failures,
            worst,
            tolerance: -1e-12,
        },
        SweepSummary {
            name: "change-of-measure-equality".into(),
            instances,
            failures: failures_eq,
            worst: worst_eq,
            tolerance: 1e-10,
        },
    ])
}

/// Exact two-task forgetting bound on random instances.
pub fn forgetting_bound_sweep<R: Real>(instances: usize, seed: u64) -> Result<SweepSummary> {
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for i in 0..instances {
        let mut g = rng::stream(seed, i as u64);
        let n = g.gen_range(2..=20);
        let k = g.gen_range(0.5..3.0);
        let q_s = random_distribution::<R>(&mut g, n, true);
        let q_st = restrict_to(&random_distribution::<R>(&mut g, n, true), &q_s);
        let l_s = random_losses::<R>(&mut g, n, k);
        let lhat_t = random_losses::<R>(&mut g, n, k);
        let lambda = R::lit(g.gen_range(0.05..50.0));
        let gap = forgetting_bound_exact(&q_s, &q_st, &l_s, &lhat_t, lambda)?
            .gap
            .to_f64_lossy();
        worst = worst.min(gap);
        if gap < -1e-10 {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        name: "forgetting-bound-exact".into(),
        instances,
        failures,
        worst,
        tolerance: -1e-10,
    })
}

/// The Gibbs posterior against random perturbations of itself under
/// `E_Q L̂ + KL(Q‖Q_s)/λ`.
pub fn gibbs_optimality_sweep<R: Real>(
    instances: usize,
    perturbations: usize,
    seed: u64,
) -> Result<SweepSummary> {
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for i in 0..instances {
        let mut g = rng::stream(seed, i as u64);
        let n = g.gen_range(2..=20);
        let prior = random_distribution::<R>(&mut g, n, false);
        let losses = random_losses::<R>(&mut g, n, 1.0);
        let lambda = R::lit(g.gen_range(0.1..30.0));
        let q = gibbs_posterior(&prior, &losses, lambda)?;
        let best = gibbs_objective(&q, &prior, &losses, lambda)?;
        for _ in 0..perturbations {
            let scale = g.gen_range(0.001..2.0);
            let logits: Vec<R> = q
                .weights()
                .iter()
                .map(|w| w.ln() + R::lit(scale * (g.gen::<f64>() - 0.5)))
                .collect();
            let other = DiscreteDistribution::from_log_weights(&logits)?;
            let value = gibbs_objective(&other, &prior, &losses, lambda)?;
            let gap = (value - best).to_f64_lossy();
            worst = worst.min(gap);
            if gap < -R::sum_tolerance(n).to_f64_lossy() {
                failures += 1;
            }
        }
    }
    Ok(SweepSummary {
        name: "gibbs-optimality".into(),
        instances: instances * perturbations,
        failures,
        worst,
        tolerance: 0.0,
    })
}

/// Total-variation distance between chained and pooled Gibbs updates.
pub fn sequential_pooled_sweep<R: Real>(chains: usize, max_tasks: usize, seed: u64) -> Result<SweepSummary> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..chains {
        let mut g = rng::stream(seed, i as u64);
        let n = g.gen_range(2..=20);
        let t = g.gen_range(1..=max_tasks.max(1));
        let prior = random_distribution::<R>(&mut g, n, true);
        let tables: Vec<Vec<R>> = (0..t).map(|_| random_losses(&mut g, n, 1.0)).collect();
        let lambdas: Vec<R> = (0..t).map(|_| R::lit(g.gen_range(0.1..10.0))).collect();
        let chained = sequential_gibbs(&prior, &tables, &lambdas)?;
        let pooled_exponent: Vec<R> = (0..n)
            .map(|h| tables.iter().zip(&lambdas).map(|(tb, &l)| l * tb[h]).sum())
            .collect();
        let pooled = gibbs_posterior(&prior, &pooled_exponent, R::one())?;
        let tv = chained.total_variation(&pooled)?.to_f64_lossy();
        worst = worst.max(tv);
        if tv >= 1e-12 {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        name: "sequential-vs-pooled".into(),
        instances: chains,
        failures,
        worst,
        tolerance: 1e-12,
    })
}
