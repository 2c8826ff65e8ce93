use forgetbound::learner::{GaussianMeanField, MlpArchitecture, PosteriorSource};
use forgetbound::metrics::{bwt_and_forgetting, empirical_loss, LossFunction, PointMass, TaskDataset};
use forgetbound::tasks::{sample_task, TaskSpec};
use forgetbound::{Error, Matrix};
use proptest::prelude::*;

fn losses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, n)
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..30).prop_flat_map(|n| (losses(n), losses(n)))
}

proptest! {
    #[test]
    fn transfer_metrics_stay_in_range((current, after) in paired(), gamma in 0.01..=1.0f64) {
        let m = bwt_and_forgetting(&current, &after, gamma).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.bwt));
        prop_assert!((-1.0..=1.0).contains(&m.forgetting));
        let mean_after = after.iter().sum::<f64>() / after.len() as f64;
        prop_assert!((m.forgetting - (m.bwt - mean_after)).abs() < 1e-12);
    }

    #[test]
    fn undiscounted_sums_scale_the_means((current, after) in paired()) {
        let m = bwt_and_forgetting(&current, &after, 1.0).unwrap();
        let n = current.len() as f64;
        prop_assert!((m.bwt_discounted - n * m.bwt).abs() < 1e-12);
        prop_assert!((m.forgetting_discounted - n * m.forgetting).abs() < 1e-12);
    }

    #[test]
    fn discounting_weights_recent_tasks_most((current, after) in paired(), gamma in 0.01..1.0f64) {
        let m = bwt_and_forgetting(&current, &after, gamma).unwrap();
        let n = current.len();
        let direct: f64 = (0..n).map(|t| gamma.powi((n - 1 - t) as i32) * current[t]).sum();
        prop_assert!((m.bwt_discounted - direct).abs() < 1e-12);
        prop_assert!(m.bwt_discounted <= n as f64 * m.bwt + 1e-12);
    }
}

#[test]
fn transfer_metric_errors() {
    assert_eq!(bwt_and_forgetting::<f64>(&[0.1], &[0.1, 0.2], 0.9), Err(Error::VectorLength { expected: 1, got: 2 }));
    assert_eq!(bwt_and_forgetting::<f64>(&[], &[], 0.9), Err(Error::NoPreviousTasks));
}

fn arch() -> MlpArchitecture {
    MlpArchitecture::new(10, vec![4], 1, 2).unwrap()
}

#[test]
fn empirical_loss_seeds_agree_at_large_sample_size() {
    let a = arch();
    let spec = TaskSpec {
        task: 0,
        angle: 0.2,
        m_train: 200,
        m_test: 1,
        seed: 3,
    };
    let (data, _) = sample_task::<f64>(&spec).unwrap();
    let mean = a.init_params::<f64>(&mut forgetbound::rng::stream(1, 0));
    let q = GaussianMeanField::isotropic(mean, 0.0).unwrap();
    let source = PosteriorSource::new(&a, &q).unwrap();
    let loss = LossFunction::zero_one();
    let n = 10_000;
    let x = empirical_loss(&source, &data, &loss, n, 11).unwrap();
    let y = empirical_loss(&source, &data, &loss, n, 12).unwrap();
    assert!((x - y).abs() <= 3.0 / (n as f64).sqrt(), "{x} vs {y}");
    assert_eq!(x, empirical_loss(&source, &data, &loss, n, 11).unwrap());
    assert!((0.0..=1.0).contains(&x));
}

#[test]
fn point_mass_ignores_draw_count() {
    let a = arch();
    let params = a.init_params::<f64>(&mut forgetbound::rng::stream(2, 0));
    let q = GaussianMeanField::point_mass(params.clone());
    let spec = TaskSpec {
        task: 0,
        angle: 1.0,
        m_train: 50,
        m_test: 1,
        seed: 4,
    };
    let (data, _) = sample_task::<f64>(&spec).unwrap();
    let loss = LossFunction::zero_one();
    let source = PosteriorSource::new(&a, &q).unwrap();
    let net = forgetbound::learner::Network { arch: &a, params };
    let direct = empirical_loss(&PointMass(net), &data, &loss, 1, 0).unwrap();
    for n in [1, 7, 300] {
        assert_eq!(empirical_loss(&source, &data, &loss, n, n as u64).unwrap(), direct);
    }
}

#[test]
fn constant_classifier_on_balanced_labels() {
    let a = MlpArchitecture::new(1, vec![], 1, 2).unwrap();
    // zero weights, bias favouring class 1
    let net = forgetbound::learner::Network {
        arch: &a,
        params: vec![0.0, 0.0, -1.0, 1.0],
    };
    let data = TaskDataset::new(0, Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0, 1, 0, 1]).unwrap();
    let v = empirical_loss(&PointMass(net), &data, &LossFunction::zero_one(), 1, 0).unwrap();
    assert_eq!(v, 0.5);
    let empty = TaskDataset::<f64>::new(0, Matrix::from_vec(0, 1, vec![]).unwrap(), vec![]).unwrap();
    let net = forgetbound::learner::Network { arch: &a, params: vec![0.0; 4] };
    assert_eq!(empirical_loss(&PointMass(net), &empty, &LossFunction::zero_one(), 1, 0), Err(Error::EmptyDataset));
}
