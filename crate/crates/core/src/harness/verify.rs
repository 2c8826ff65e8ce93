use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{gradient_check, MlpArchitecture};
use crate::matrix::Matrix;
use crate::oracle::sweeps::{
    change_of_measure_sweep, forgetting_bound_sweep, gibbs_optimality_sweep, sequential_pooled_sweep,
};
use crate::oracle::{
    hoeffding_mgf_check, oracle_bound_check, DiscreteDistribution, DiscreteHypothesisSpace, DiscreteTask,
    OracleCheckConfig, OracleMode, SweepSummary,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyScope {
    All,
    Lemmas,
    Oracle,
    Gradients,
}

impl std::str::FromStr for VerifyScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(VerifyScope::All),
            "lemmas" => Ok(VerifyScope::Lemmas),
            "oracle" => Ok(VerifyScope::Oracle),
            "gradients" => Ok(VerifyScope::Gradients),
            other => Err(Error::Config(format!("unknown scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scope: VerifyScope,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Ten hypotheses with losses spread over `[0.05, 0.95]`, uniform prior, and
/// `tasks` copies of the same task.
pub fn identical_tasks_space(m: usize, tasks: usize) -> Result<DiscreteHypothesisSpace<f64>> {
    let n = 10;
    let losses: Vec<f64> = (0..n).map(|h| 0.05 + 0.1 * h as f64).collect();
    DiscreteHypothesisSpace::identical_tasks(1.0, DiscreteDistribution::uniform(n)?, losses, m, tasks)
}

/// Identical tasks whose prior sits almost entirely on near-perfect
/// hypotheses, so that `E_P exp(-λ L̂)` stays above `exp(-c)` for small `λ c`.
pub fn high_covariance_space(m: usize, tasks: usize) -> Result<DiscreteHypothesisSpace<f64>> {
    let losses = vec![0.0, 0.0, 0.002, 0.3, 0.5, 0.7, 0.9];
    let prior = DiscreteDistribution::from_unnormalized(vec![0.33, 0.33, 0.32, 0.005, 0.005, 0.005, 0.005])?;
    DiscreteHypothesisSpace::identical_tasks(1.0, prior, losses, m, tasks)
}

pub fn single_hypothesis_space() -> Result<DiscreteHypothesisSpace<f64>> {
    DiscreteHypothesisSpace::new(
        1.0,
        DiscreteDistribution::uniform(1)?,
        vec![
            DiscreteTask { m: 20, loss_means: vec![0.25] },
            DiscreteTask { m: 20, loss_means: vec![0.6] },
        ],
    )
}

fn outcome(name: &str, passed: bool, worst: f64, detail: String, start: Instant) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        worst,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn sweep_outcome(s: &SweepSummary, start: Instant) -> CheckOutcome {
    outcome(
        &s.name,
        s.passed(),
        s.worst,
        format!("{} instances, {} failures", s.instances, s.failures),
        start,
    )
}

fn lemma_checks(seed: u64, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let start = Instant::now();
    for s in change_of_measure_sweep::<f64>(1000, seed)? {
        out.push(sweep_outcome(&s, start));
    }
    let start = Instant::now();
    out.push(sweep_outcome(&forgetting_bound_sweep::<f64>(1000, seed)?, start));
    let start = Instant::now();
    out.push(sweep_outcome(&gibbs_optimality_sweep::<f64>(200, 50, seed)?, start));
    let start = Instant::now();
    out.push(sweep_outcome(&sequential_pooled_sweep::<f64>(200, 10, seed)?, start));
    let start = Instant::now();
    let space = identical_tasks_space(50, 1)?;
    let r = hoeffding_mgf_check(&space, 0, 5.0, 10_000, seed, 0.05)?;
    out.push(outcome(
        "hoeffding-frequency",
        r.holds,
        r.lhs,
        format!("violation rate {:.4} vs δ = 0.05 (se {:.4})", r.lhs, r.mc_stderr),
        start,
    ));
    Ok(())
}

fn oracle_checks(seed: u64, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let cases: [(&str, OracleMode, DiscreteHypothesisSpace<f64>, f64); 4] = [
        ("oracle-cor42", OracleMode::Cor42, identical_tasks_space(50, 2)?, 5.0),
        ("oracle-thm47", OracleMode::Thm47, identical_tasks_space(50, 5)?, 5.0),
        ("oracle-highcov", OracleMode::Highcov, high_covariance_space(50, 5)?, 2.0),
        ("oracle-gibbs-ratio", OracleMode::GibbsRatio, identical_tasks_space(50, 5)?, 5.0),
    ];
    for (name, mode, space, lambda) in cases {
        let start = Instant::now();
        let mut cfg = OracleCheckConfig::new(mode, lambda);
        cfg.seed = seed;
        cfg.c = 0.1;
        let r = oracle_bound_check(&space, &cfg)?;
        out.push(outcome(
            name,
            r.holds && !r.precondition_violated,
            r.gap,
            format!(
                "lhs {:.5} rhs {:.5} se {:.5} precondition violations {}",
                r.lhs, r.rhs, r.mc_stderr, r.violations
            ),
            start,
        ));
    }
    let start = Instant::now();
    let space = single_hypothesis_space()?;
    let mut all = true;
    for mode in OracleMode::ALL {
        let mut cfg = OracleCheckConfig::new(mode, 1.0);
        cfg.seed = seed;
        cfg.c = 1.0;
        cfg.n_resample = 200;
        let r = oracle_bound_check(&space, &cfg)?;
        all &= r.holds && !r.precondition_violated;
    }
    out.push(outcome("oracle-single-hypothesis", all, 0.0, "all modes".into(), start));
    Ok(())
}

/// Random small architectures with at most `max_params` parameters.
pub fn random_architecture(g: &mut rng::SimRng, max_params: usize) -> MlpArchitecture {
    loop {
        let depth = g.gen_range(0..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| g.gen_range(1..=8)).collect();
        let arch = MlpArchitecture::new(g.gen_range(1..=5), hidden, g.gen_range(1..=3), g.gen_range(2..=3))
            .expect("positive sizes");
        if arch.n_params() <= max_params {
            return arch;
        }
    }
}

/// Worst finite-difference discrepancy over `n_arch` random architectures.
pub fn gradient_sweep(n_arch: usize, seed: u64) -> Result<(f64, f64)> {
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    for a in 0..n_arch {
        let mut g = rng::stream(seed, a as u64);
        let arch = random_architecture(&mut g, 200);
        let params: Vec<f64> = arch.init_params::<f64>(&mut g).iter().map(|p| 2.0 * p).collect();
        let task = g.gen_range(0..arch.n_tasks);
        let rows = g.gen_range(1..=6);
        let data: Vec<f64> = (0..rows * arch.input_dim).map(|_| g.gen_range(-2.0..2.0)).collect();
        let x = Matrix::from_vec(rows, arch.input_dim, data)?;
        let labels: Vec<usize> = (0..rows).map(|_| g.gen_range(0..arch.classes_per_task)).collect();
        let check = gradient_check(&params, &arch, task, &x, &labels, 1e-5, 1e-5)?;
        worst_rel = worst_rel.max(check.max_rel_err);
        worst_abs = worst_abs.max(check.max_abs_err_small);
    }
    Ok((worst_rel, worst_abs))
}

fn gradient_checks(seed: u64, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let start = Instant::now();
    let (rel, abs) = gradient_sweep(20, seed)?;
    out.push(outcome(
        "gradients",
        rel < 1e-4 && abs < 1e-7,
        rel,
        format!("max relative error {rel:.3e}, max absolute error near zero {abs:.3e}"),
        start,
    ));
    Ok(())
}

/// Runs the property sweeps and checks selected by `scope`.
pub fn verify_suite(scope: VerifyScope, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    if matches!(scope, VerifyScope::All | VerifyScope::Lemmas) {
        lemma_checks(seed, &mut checks)?;
    }
    if matches!(scope, VerifyScope::All | VerifyScope::Oracle) {
        oracle_checks(seed, &mut checks)?;
    }
    if matches!(scope, VerifyScope::All | VerifyScope::Gradients) {
        gradient_checks(seed, &mut checks)?;
    }
    Ok(VerifyReport { scope, seed, checks })
}
