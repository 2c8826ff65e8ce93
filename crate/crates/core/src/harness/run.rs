use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use crate::bounds::{
    disagreement_from_weighted_draws, loss_draws_with_ratio, mixture_log_weights, structural_terms, AssembledBound,
    BoundReport, DisagreementEstimator,
};
use crate::error::{Error, Result};
use crate::learner::{
    ewc_posterior, ewc_train_task, evaluate_posterior, initial_prior, vi_train_task, EwcConfig, EwcState,
    GaussianMeanField, MlpArchitecture, PosteriorCheckpoint, PosteriorSource, ViConfig,
};
use crate::metrics::{bwt_and_forgetting, CheckpointRecord, LossDraws, LossFunction, MetricsLog, TaskDataset};
use crate::numerics::mean_and_stderr;
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::tasks::{environment_specs, sample_task};

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun<R> {
    pub seed: u64,
    pub log: MetricsLog<R>,
    /// Held-out loss of every learned task right after it was learned.
    pub after_training: Vec<R>,
    /// `(task count, bound)` for every checkpoint after the first task.
    pub bounds: Vec<(usize, AssembledBound<R>)>,
    pub final_posterior: Option<PosteriorCheckpoint<R>>,
    /// Set when training diverged; the log then holds the completed checkpoints.
    pub error: Option<String>,
}

/// Files written for one seed.
#[derive(Debug, Clone, Serialize)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub metrics_csv: PathBuf,
    pub bound_reports: Vec<PathBuf>,
    pub posterior: Option<PathBuf>,
    /// Training failure; artifacts are partial when present.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts<R> {
    pub output_dir: Option<PathBuf>,
    pub config_echo: Option<PathBuf>,
    pub seeds: Vec<SeedArtifacts>,
    pub runs: Vec<SeedRun<R>>,
}

impl<R> RunArtifacts<R> {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }
}

#[derive(Serialize)]
#[serde(bound = "R: Real")]
struct BoundFile<R> {
    checkpoint: usize,
    task_id: usize,
    #[serde(flatten)]
    report: BoundReport<R>,
    mc_stderr: R,
}

enum Learner<R> {
    Vi { q: GaussianMeanField<R>, cfg: ViConfig<R> },
    Ewc { state: EwcState<R>, cfg: EwcConfig<R> },
}

impl<R: Real> Learner<R> {
    fn new(cfg: &ExperimentConfig, arch: &MlpArchitecture, seed: u64) -> Result<Self> {
        let init_seed = derive_seed(seed, 1);
        Ok(match cfg.method {
            Method::Vi => {
                let q = initial_prior(arch, R::lit(cfg.training.init_log_std), init_seed)?;
                let mut vi = ViConfig::new(R::lit(cfg.lambda.at(0)));
                vi.epochs = cfg.training.epochs;
                vi.batch_size = cfg.training.batch_size;
                vi.n_mc_train = cfg.training.n_mc_train;
                vi.adam = cfg.adam();
                Learner::Vi { q, cfg: vi }
            }
            Method::Ewc => {
                let w = initial_prior::<R>(arch, R::zero(), init_seed)?.mean;
                let state = EwcState::new(w, R::lit(cfg.ewc.lambda_ewc), R::lit(cfg.ewc.sigma2))?;
                let ewc = EwcConfig {
                    epochs: cfg.training.epochs,
                    batch_size: cfg.training.batch_size,
                    fisher_samples: cfg.ewc.fisher_samples,
                    adam: cfg.adam(),
                };
                Learner::Ewc { state, cfg: ewc }
            }
        })
    }

    fn posterior(&self) -> Result<GaussianMeanField<R>> {
        match self {
            Learner::Vi { q, .. } => Ok(q.clone()),
            Learner::Ewc { state, .. } => ewc_posterior(state),
        }
    }

    fn train(&mut self, arch: &MlpArchitecture, data: &TaskDataset<R>, lambda: R, seed: u64) -> Result<()> {
        match self {
            Learner::Vi { q, cfg } => {
                cfg.lambda = lambda;
                *q = vi_train_task(q, arch, data, cfg, seed)?;
            }
            Learner::Ewc { state, cfg } => {
                *state = ewc_train_task(state, arch, data, cfg, seed)?;
            }
        }
        Ok(())
    }

    fn checkpoint(&self, arch: &MlpArchitecture) -> PosteriorCheckpoint<R> {
        match self {
            Learner::Vi { q, .. } => PosteriorCheckpoint::vi(arch, q),
            Learner::Ewc { state, .. } => PosteriorCheckpoint::ewc(arch, state),
        }
    }
}

struct Checkpoint<R> {
    record: CheckpointRecord<R>,
    bound: Option<AssembledBound<R>>,
}

/// Metrics and bound once `n` tasks have been learned.
#[allow(clippy::too_many_arguments)]
fn evaluate_checkpoint<R: Real>(
    cfg: &ExperimentConfig,
    arch: &MlpArchitecture,
    index: usize,
    n: usize,
    current: &GaussianMeanField<R>,
    previous: &GaussianMeanField<R>,
    trains: &[TaskDataset<R>],
    tests: &[TaskDataset<R>],
    after: &[R],
    seed: u64,
) -> Result<Checkpoint<R>> {
    let loss = LossFunction::zero_one();
    let latest = n - 1;
    let past = latest;
    let bcfg = cfg.bound_config::<R>(latest)?;
    let fwd_loss = after.iter().copied().sum::<R>() / R::lit(n as f64);

    // Columns: past test sets, the latest test set, the latest training set.
    let mut sets: Vec<&TaskDataset<R>> = tests[..n].iter().collect();
    sets.push(&trains[latest]);
    let source = PosteriorSource::new(arch, current)?;
    let prior_source = PosteriorSource::new(arch, previous)?;
    let (draws, current_ratio) = loss_draws_with_ratio(
        &source,
        &prior_source,
        &sets,
        &loss,
        bcfg.n_mc,
        derive_seed(seed, 30_000 + latest as u64),
    )?;
    let means = draws.means();
    let current_losses = means[..past].to_vec();

    if past == 0 {
        return Ok(Checkpoint {
            record: CheckpointRecord {
                checkpoint: index,
                task_id: n,
                transfer: None,
                fwd_loss,
                bound: None,
                mc_stderr: R::zero(),
                current_losses,
            },
            bound: None,
        });
    }

    let transfer = bwt_and_forgetting(&current_losses, &after[..past], bcfg.gamma)?;

    let mut prior_sets: Vec<&TaskDataset<R>> = tests[..past].iter().collect();
    prior_sets.push(&trains[latest]);
    let (prior_draws, prior_ratio) = loss_draws_with_ratio(
        &prior_source,
        &source,
        &prior_sets,
        &loss,
        bcfg.n_mc_prior,
        derive_seed(seed, 40_000 + latest as u64),
    )?;
    let n_prior = prior_draws.n_draws();
    let mut values = prior_draws.values;
    let mut log_q_over_p: Vec<R> = prior_ratio.iter().map(|&r| -r).collect();
    if bcfg.estimator == DisagreementEstimator::Mixture {
        // Reuse the current draws without the latest test column.
        values.extend(draws.values.iter().map(|row| {
            let mut r = row[..past].to_vec();
            r.push(row[n]);
            r
        }));
        log_q_over_p.extend(current_ratio);
    }
    let log_weights = mixture_log_weights(n_prior, &log_q_over_p)?;
    let disagreement = disagreement_from_weighted_draws(&LossDraws { values }, &log_weights, past, bcfg.lambda)?;
    let empirical = draws.estimate(n);
    let kl = current.kl_to(previous)?;
    let (hoeffding, confidence) = structural_terms(bcfg.lambda, bcfg.k, trains[latest].m(), bcfg.delta)?;
    let past_loss = after[..past].iter().copied().sum::<R>() / R::lit(past as f64);
    let report = BoundReport::from_terms(
        empirical.value,
        past_loss,
        kl / bcfg.lambda,
        hoeffding,
        confidence,
        disagreement.value,
    );
    // The stored past losses cancel in `bound - forgetting`, so the paired
    // per-draw difference carries all of the current posterior's noise.
    let paired: Vec<R> = draws
        .values
        .iter()
        .map(|row| row[n] - row[..past].iter().copied().sum::<R>() / R::lit(past as f64))
        .collect();
    let (_, paired_se) = mean_and_stderr(&paired);
    let mc_stderr = (paired_se * paired_se + disagreement.stderr * disagreement.stderr).sqrt();
    Ok(Checkpoint {
        record: CheckpointRecord {
            checkpoint: index,
            task_id: n,
            transfer: Some(transfer),
            fwd_loss,
            bound: Some(report),
            mc_stderr,
            current_losses,
        },
        bound: Some(AssembledBound { report, mc_stderr }),
    })
}

/// Trains one seed through the whole task sequence, in memory.
pub fn run_seed<R: Real>(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun<R>> {
    cfg.validate()?;
    let arch = cfg.architecture()?;
    let mut env = cfg.environment;
    env.seed = derive_seed(cfg.environment.seed, seed);
    let specs = environment_specs(&env, cfg.m_train, cfg.m_test)?;
    let mut trains = Vec::with_capacity(specs.len());
    let mut tests = Vec::with_capacity(specs.len());
    for spec in &specs {
        let (a, b) = sample_task::<R>(spec)?;
        trains.push(a);
        tests.push(b);
    }
    let checkpoints = cfg.checkpoints();
    let mut learner = Learner::<R>::new(cfg, &arch, seed)?;
    let mut run = SeedRun {
        seed,
        log: MetricsLog::default(),
        after_training: Vec::with_capacity(specs.len()),
        bounds: Vec::new(),
        final_posterior: None,
        error: None,
    };
    let loss = LossFunction::zero_one();
    let n_mc = cfg.bound.n_mc;
    for t in 0..specs.len() {
        let previous = learner.posterior()?;
        let lambda = R::lit(cfg.lambda.at(t));
        match learner.train(&arch, &trains[t], lambda, derive_seed(seed, 10_000 + t as u64)) {
            Ok(()) => {}
            Err(e @ Error::Diverged(_)) => {
                run.error = Some(e.to_string());
                return Ok(run);
            }
            Err(e) => return Err(e),
        }
        let current = learner.posterior()?;
        let after = evaluate_posterior(&current, &arch, &tests[t], &loss, n_mc, derive_seed(seed, 20_000 + t as u64))?;
        run.after_training.push(after);
        let n = t + 1;
        if let Some(index) = checkpoints.iter().position(|&c| c == n) {
            let cp = evaluate_checkpoint(
                cfg,
                &arch,
                index,
                n,
                &current,
                &previous,
                &trains,
                &tests,
                &run.after_training,
                seed,
            )?;
            if let Some(b) = cp.bound {
                run.bounds.push((n, b));
            }
            run.log.push(cp.record);
        }
    }
    run.final_posterior = Some(learner.checkpoint(&arch));
    Ok(run)
}

fn write_seed<R: Real>(dir: &Path, run: &SeedRun<R>) -> Result<SeedArtifacts> {
    let seed_dir = dir.join(format!("seed_{}", run.seed));
    let bounds_dir = seed_dir.join("bounds");
    fs::create_dir_all(&bounds_dir)?;
    let metrics_csv = seed_dir.join("metrics.csv");
    run.log.write_csv(fs::File::create(&metrics_csv)?)?;
    let mut bound_reports = Vec::new();
    for rec in &run.log.records {
        let Some(report) = rec.bound else { continue };
        let path = bounds_dir.join(format!("checkpoint_{:03}.json", rec.task_id));
        let file = BoundFile {
            checkpoint: rec.checkpoint,
            task_id: rec.task_id,
            report,
            mc_stderr: rec.mc_stderr,
        };
        fs::write(&path, serde_json::to_string_pretty(&file)?)?;
        bound_reports.push(path);
    }
    let posterior = match &run.final_posterior {
        Some(p) => {
            let path = seed_dir.join("posterior.json");
            p.write_json(&path)?;
            Some(path)
        }
        None => None,
    };
    if let Some(e) = &run.error {
        fs::write(seed_dir.join("FAILED"), e)?;
    }
    Ok(SeedArtifacts {
        seed: run.seed,
        metrics_csv,
        bound_reports,
        posterior,
        error: run.error.clone(),
    })
}

/// Runs every seed (in parallel) and writes artifacts when `output_dir` is set.
///
/// Layout: `config.json` with resolved defaults, then per seed
/// `seed_<s>/metrics.csv`, `seed_<s>/bounds/checkpoint_<t>.json` and
/// `seed_<s>/posterior.json`. A diverged seed also gets a `FAILED` file.
pub fn run_experiment<R: Real>(cfg: &ExperimentConfig) -> Result<RunArtifacts<R>> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed::<R>(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut artifacts = RunArtifacts {
        output_dir: cfg.output_dir.clone(),
        config_echo: None,
        seeds: Vec::new(),
        runs,
    };
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        let echo = dir.join("config.json");
        fs::write(&echo, serde_json::to_string_pretty(cfg)?)?;
        artifacts.config_echo = Some(echo);
        for run in &artifacts.runs {
            artifacts.seeds.push(write_seed(dir, run)?);
        }
    }
    Ok(artifacts)
}
