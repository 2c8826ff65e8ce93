use forgetbound::bounds::{
    disagreement_mc, disagreement_mixture, forgetting_bound_assemble, kl_gaussian_diag, structural_terms, BoundConfig,
    BoundReport, DisagreementEstimator, PosteriorFamily,
};
use forgetbound::learner::{GaussianMeanField, MlpArchitecture, Network, PosteriorSource, WeightMixture};
use forgetbound::metrics::{Hypothesis, LossFunction, TaskDataset};
use forgetbound::oracle::{disagreement_exact, kl_discrete, DiscreteDistribution};
use forgetbound::rng;
use forgetbound::tasks::{sample_task, TaskSpec};
use forgetbound::Error;
use proptest::prelude::*;
use rand::Rng;

fn gaussian(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-3.0..3.0f64, d), prop::collection::vec(-3.0..1.0f64, d))
}

fn pair() -> impl Strategy<Value = ((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
    (1usize..16).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

proptest! {
    #[test]
    fn gaussian_kl_is_nonnegative(((qm, qs), (pm, ps)) in pair()) {
        let kl = kl_gaussian_diag(&qm, &qs, &pm, &ps).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_gaussian_diag(&qm, &qs, &qm, &qs).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_is_zero_only_on_identity(((qm, qs), _) in pair(), j in 0usize..16, bump in 0.01..1.0f64) {
        let j = j % qm.len();
        let mut moved = qm.clone();
        moved[j] += bump;
        prop_assert!(kl_gaussian_diag(&moved, &qs, &qm, &qs).unwrap() > 0.0);
    }

    #[test]
    fn log_density_ratio_matches_the_direct_formula(((qm, qs), (pm, ps)) in pair(), seed in 0u64..1000) {
        let q = GaussianMeanField::new(qm, qs).unwrap();
        let p = GaussianMeanField::new(pm, ps).unwrap();
        let w = q.sample_with(&mut rng::stream(seed, 0));
        let log_pdf = |g: &GaussianMeanField<f64>| -> f64 {
            g.mean
                .iter()
                .zip(&g.log_std)
                .zip(&w)
                .map(|((&m, &s), &x)| {
                    let z = (x - m) / s.exp();
                    -0.5 * z * z - s - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum()
        };
        let direct = log_pdf(&q) - log_pdf(&p);
        let r = q.log_density_ratio(&p, &w).unwrap();
        prop_assert!((r - direct).abs() < 1e-9 * (1.0 + direct.abs()), "{} vs {}", r, direct);
    }

    #[test]
    fn report_totals_equal_their_terms(terms in prop::collection::vec(-5.0..5.0f64, 6)) {
        let r = BoundReport::from_terms(terms[0], terms[1], terms[2], terms[3], terms[4], terms[5]);
        prop_assert!(r.consistency_error() < 1e-12);
        let f = terms[0] - terms[1] + terms[2] + terms[3] + terms[4] + terms[5];
        prop_assert!((r.total_forgetting_bound - f).abs() < 1e-12);
        prop_assert!((r.total_bwt_bound - (f + terms[1])).abs() < 1e-12);
    }

    #[test]
    fn structural_terms_follow_their_formulas(lambda in 0.1..1e4f64, m in 1usize..10_000, delta in 0.001..0.999f64) {
        let (h, c) = structural_terms(lambda, 1.0, m, delta).unwrap();
        prop_assert!((h - lambda / (8.0 * m as f64)).abs() <= 1e-12 * h.max(1.0));
        prop_assert!((c - (1.0 / delta).ln() / lambda).abs() <= 1e-12 * c.max(1.0));
    }
}

/// Datasets for tasks `0..n`, each at its own angle.
fn tasks(n: usize, m: usize) -> (Vec<TaskDataset<f64>>, Vec<TaskDataset<f64>>) {
    (0..n)
        .map(|t| {
            sample_task::<f64>(&TaskSpec {
                task: t,
                angle: 0.6 * t as f64,
                m_train: m,
                m_test: m,
                seed: 50 + t as u64,
            })
            .unwrap()
        })
        .unzip()
}

fn atoms(arch: &MlpArchitecture, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = rng::stream(seed, 0);
    (0..n)
        .map(|_| (0..arch.n_params()).map(|_| g.gen_range(-1.5..1.5)).collect())
        .collect()
}

struct Surrogate {
    arch: MlpArchitecture,
    atoms: Vec<Vec<f64>>,
    train: Vec<TaskDataset<f64>>,
    test: Vec<TaskDataset<f64>>,
}

impl Surrogate {
    fn new(n_tasks: usize) -> Self {
        let arch = MlpArchitecture::new(10, vec![], n_tasks, 2).unwrap();
        let atoms = atoms(&arch, 3, 9);
        let (train, test) = tasks(n_tasks, 200);
        Self { arch, atoms, train, test }
    }

    fn mixture(&self, w: &[f64]) -> WeightMixture<'_, f64> {
        let d = DiscreteDistribution::from_unnormalized(w.to_vec()).unwrap();
        WeightMixture::new(&self.arch, self.atoms.clone(), d).unwrap()
    }

    fn losses(&self, data: &TaskDataset<f64>) -> Vec<f64> {
        let loss = LossFunction::zero_one();
        self.atoms
            .iter()
            .map(|a| {
                let net = Network { arch: &self.arch, params: a.clone() };
                net.empirical_loss(data, &loss).unwrap()
            })
            .collect()
    }

    /// Exact disagreement: the mean over past tasks of the two-task term.
    fn exact_disagreement(&self, prior: &DiscreteDistribution<f64>, lambda: f64) -> f64 {
        let cur = self.train.len() - 1;
        let target = self.losses(&self.train[cur]);
        (0..cur)
            .map(|t| disagreement_exact(prior, &self.losses(&self.test[t]), &target, lambda).unwrap())
            .sum::<f64>()
            / cur as f64
    }
}

#[test]
fn disagreement_matches_the_exact_surrogate() {
    let s = Surrogate::new(3);
    let w = [0.5, 0.3, 0.2];
    let prev = s.mixture(&w);
    let lambda = 5.0;
    let exact = s.exact_disagreement(&DiscreteDistribution::from_unnormalized(w.to_vec()).unwrap(), lambda);
    let past: Vec<&TaskDataset<f64>> = s.test[..2].iter().collect();
    let loss = LossFunction::zero_one();
    let est = disagreement_mc(&prev, &past, &s.train[2], &loss, lambda, 4000, 3).unwrap();
    assert!((est.value - exact).abs() <= 3.0 * est.stderr + 1e-12, "{} vs {exact} (se {})", est.value, est.stderr);

    let cur = s.mixture(&[0.1, 0.2, 0.7]);
    let mix = disagreement_mixture(&prev, &cur, &past, &s.train[2], &loss, lambda, 2000, 2000, 3).unwrap();
    assert!((mix.value - exact).abs() <= 3.0 * mix.stderr + 1e-12, "{} vs {exact} (se {})", mix.value, mix.stderr);
}

#[test]
fn disagreement_ignores_the_order_of_past_tasks() {
    let s = Surrogate::new(4);
    let prev = s.mixture(&[0.2, 0.5, 0.3]);
    let loss = LossFunction::zero_one();
    let fwd: Vec<&TaskDataset<f64>> = s.test[..3].iter().collect();
    let rev: Vec<&TaskDataset<f64>> = s.test[..3].iter().rev().collect();
    let a = disagreement_mc(&prev, &fwd, &s.train[3], &loss, 4.0, 300, 8).unwrap();
    let b = disagreement_mc(&prev, &rev, &s.train[3], &loss, 4.0, 300, 8).unwrap();
    assert!((a.value - b.value).abs() < 1e-12);
}

#[test]
fn assembled_bound_matches_the_exact_surrogate() {
    let s = Surrogate::new(2);
    let (wp, wq) = ([0.4, 0.4, 0.2], [0.1, 0.3, 0.6]);
    let (prev, cur) = (s.mixture(&wp), s.mixture(&wq));
    let (dp, dq) = (
        DiscreteDistribution::from_unnormalized(wp.to_vec()).unwrap(),
        DiscreteDistribution::from_unnormalized(wq.to_vec()).unwrap(),
    );
    let lambda = 4.0;
    let mut cfg = BoundConfig::new(lambda);
    cfg.n_mc = 3000;
    cfg.n_mc_prior = 3000;
    let after = [0.2];
    let loss = LossFunction::zero_one();
    let past = [&s.test[0]];
    let train_losses = s.losses(&s.train[1]);
    let (h, c) = structural_terms(lambda, 1.0, s.train[1].m(), 0.05).unwrap();
    let exact = dq.expect(&train_losses).unwrap() - after[0]
        + kl_discrete(&dq, &dp).unwrap() / lambda
        + h
        + c
        + s.exact_disagreement(&dp, lambda);
    for estimator in [DisagreementEstimator::Prior, DisagreementEstimator::Mixture] {
        cfg.estimator = estimator;
        let b = forgetting_bound_assemble(&cur, &prev, &s.train[1], &past, &after, &loss, &cfg, 2).unwrap();
        let total = b.report.total_forgetting_bound;
        assert!((total - exact).abs() <= 3.0 * b.mc_stderr, "{estimator:?}: {total} vs {exact} (se {})", b.mc_stderr);
        assert!(b.report.consistency_error() < 1e-12);
        assert_eq!(b.report.kl_term, cur.kl_divergence(&prev).unwrap() / lambda);
    }
}

#[test]
fn identical_posteriors_have_no_kl_term() {
    let s = Surrogate::new(2);
    let arch = &s.arch;
    let q = GaussianMeanField::isotropic(s.atoms[0].clone(), -1.0).unwrap();
    let src = PosteriorSource::new(arch, &q).unwrap();
    let cfg = BoundConfig::new(10.0);
    let b = forgetting_bound_assemble(&src, &src, &s.train[1], &[&s.test[0]], &[0.3], &LossFunction::zero_one(), &cfg, 0)
        .unwrap();
    assert_eq!(b.report.kl_term, 0.0);
}

#[test]
fn point_mass_disagreement_is_the_loss_difference() {
    let s = Surrogate::new(2);
    let q = GaussianMeanField::point_mass(s.atoms[1].clone());
    let src = PosteriorSource::new(&s.arch, &q).unwrap();
    let loss = LossFunction::zero_one();
    let d = disagreement_mc(&src, &[&s.test[0]], &s.train[1], &loss, 7.0, 50, 0).unwrap();
    let diff = s.losses(&s.test[0])[1] - s.losses(&s.train[1])[1];
    assert!((d.value - diff).abs() < 1e-12);
    assert_eq!(d.stderr, 0.0);
}

#[test]
fn assembly_errors() {
    let s = Surrogate::new(2);
    let q = GaussianMeanField::isotropic(s.atoms[0].clone(), -1.0).unwrap();
    let src = PosteriorSource::new(&s.arch, &q).unwrap();
    let loss = LossFunction::zero_one();
    let cfg = BoundConfig::new(10.0);
    assert_eq!(
        forgetting_bound_assemble(&src, &src, &s.train[1], &[], &[], &loss, &cfg, 0).unwrap_err(),
        Error::NoPreviousTasks
    );
    assert!(forgetting_bound_assemble(&src, &src, &s.train[1], &[&s.test[0]], &[0.1, 0.2], &loss, &cfg, 0).is_err());
    let mut bad = cfg;
    bad.lambda = -1.0;
    assert!(matches!(
        forgetting_bound_assemble(&src, &src, &s.train[1], &[&s.test[0]], &[0.1], &loss, &bad, 0),
        Err(Error::Config(_))
    ));
}
