//! Loss contracts, Monte-Carlo loss estimation, and backward-transfer /
//! forgetting metrics over a task sequence.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundReport;
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::numerics::mean_and_stderr;
use crate::rng::{self, SimRng};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    ZeroOne,
    ClampedCrossEntropy,
}

/// A loss bounded in `[0, K]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct LossFunction<R> {
    pub kind: LossKind,
    pub bound: R,
}

impl<R: Real> LossFunction<R> {
    pub fn zero_one() -> Self {
        Self {
            kind: LossKind::ZeroOne,
            bound: R::one(),
        }
    }

    pub fn clamped_cross_entropy(bound: R) -> Result<Self> {
        if !(bound > R::zero()) || !bound.is_finite() {
            return Err(Error::domain("cross-entropy clamp must be positive and finite"));
        }
        Ok(Self {
            kind: LossKind::ClampedCrossEntropy,
            bound,
        })
    }

    /// Loss of one prediction given its class scores (logits).
    pub fn eval(&self, scores: &[R], label: usize) -> R {
        match self.kind {
            LossKind::ZeroOne => {
                // Ties resolve to the lowest class index.
                let mut best = 0;
                for (j, &s) in scores.iter().enumerate().skip(1) {
                    if s > scores[best] {
                        best = j;
                    }
                }
                if best == label {
                    R::zero()
                } else {
                    R::one()
                }
            }
            LossKind::ClampedCrossEntropy => {
                let lse = crate::numerics::log_sum_exp(scores);
                let nll = lse - scores[label];
                if nll.is_nan() {
                    self.bound
                } else {
                    nll.max(R::zero()).min(self.bound)
                }
            }
        }
    }
}

/// Labelled sample for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct TaskDataset<R> {
    /// Index of the task (and of the output head that scores it).
    pub task: usize,
    pub features: Matrix<R>,
    pub labels: Vec<usize>,
}

impl<R: Real> TaskDataset<R> {
    pub fn new(task: usize, features: Matrix<R>, labels: Vec<usize>) -> Result<Self> {
        check_len(features.rows(), labels.len())?;
        Ok(Self {
            task,
            features,
            labels,
        })
    }

    /// Sample count `m`.
    #[inline]
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            task: self.task,
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Fails unless every label is below `classes`.
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&y| y >= classes) {
            Some(&y) => Err(Error::IndexOutOfRange {
                what: "label",
                index: y,
                limit: classes,
            }),
            None => Ok(()),
        }
    }
}

/// A single classifier: maps a task index and a feature batch to class scores.
pub trait Hypothesis<R: Real> {
    fn scores(&self, task: usize, features: &Matrix<R>) -> Result<Matrix<R>>;

    /// Mean loss `(1/m) Σ_j ℓ(h, z_j)` over a dataset.
    fn empirical_loss(&self, data: &TaskDataset<R>, loss: &LossFunction<R>) -> Result<R> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let scores = self.scores(data.task, &data.features)?;
        let total: R = data
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| loss.eval(scores.row(i), y))
            .sum();
        Ok(total / R::lit(data.m() as f64))
    }
}

/// Anything that yields hypotheses: a point hypothesis or a distribution over them.
pub trait HypothesisSource<R: Real> {
    type Draw: Hypothesis<R>;

    fn draw(&self, rng: &mut SimRng) -> Self::Draw;

    /// True when every draw is the same hypothesis; Monte-Carlo size is then ignored.
    fn is_point(&self) -> bool {
        false
    }
}

/// Degenerate distribution at a single hypothesis.
#[derive(Debug, Clone)]
pub struct PointMass<H>(pub H);

impl<R: Real, H: Hypothesis<R> + Clone> HypothesisSource<R> for PointMass<H> {
    type Draw = H;

    fn draw(&self, _rng: &mut SimRng) -> H {
        self.0.clone()
    }

    fn is_point(&self) -> bool {
        true
    }
}

/// Per-draw empirical losses: `values[draw][dataset]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraws<R> {
    pub values: Vec<Vec<R>>,
}

impl<R: Real> LossDraws<R> {
    pub fn n_draws(&self) -> usize {
        self.values.len()
    }

    /// Losses of every draw on dataset `j`.
    pub fn column(&self, j: usize) -> Vec<R> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Monte-Carlo mean and standard error for dataset `j`.
    pub fn estimate(&self, j: usize) -> McEstimate<R> {
        McEstimate::from_samples(&self.column(j))
    }

    pub fn means(&self) -> Vec<R> {
        let n = self.values.first().map_or(0, Vec::len);
        (0..n).map(|j| self.estimate(j).value).collect()
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct McEstimate<R> {
    pub value: R,
    pub stderr: R,
}

impl<R: Real> McEstimate<R> {
    pub fn exact(value: R) -> Self {
        Self {
            value,
            stderr: R::zero(),
        }
    }

    pub fn from_samples(xs: &[R]) -> Self {
        let (value, stderr) = mean_and_stderr(xs);
        Self { value, stderr }
    }
}

/// Evaluates `n_draws` hypotheses from `source` on every dataset, reusing the
/// same draws across datasets. A point source is drawn once.
pub fn loss_draws<R, S>(
    source: &S,
    datasets: &[&TaskDataset<R>],
    loss: &LossFunction<R>,
    n_draws: usize,
    seed: u64,
) -> Result<LossDraws<R>>
where
    R: Real,
    S: HypothesisSource<R>,
{
    if n_draws == 0 {
        return Err(Error::domain("number of Monte-Carlo draws must be at least 1"));
    }
    if datasets.iter().any(|d| d.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let n = if source.is_point() { 1 } else { n_draws };
    let mut rng = rng::stream(seed, 0);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let h = source.draw(&mut rng);
        let row = datasets
            .iter()
            .map(|d| h.empirical_loss(d, loss))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    Ok(LossDraws { values })
}

/// Expected loss of a point hypothesis or a distribution on `data`; for a
/// distribution this is the Monte-Carlo average over `n_mc` draws.
pub fn empirical_loss<R, S>(
    source: &S,
    data: &TaskDataset<R>,
    loss: &LossFunction<R>,
    n_mc: usize,
    seed: u64,
) -> Result<R>
where
    R: Real,
    S: HypothesisSource<R>,
{
    Ok(empirical_loss_estimate(source, data, loss, n_mc, seed)?.value)
}

/// As [`empirical_loss`], also reporting the Monte-Carlo standard error.
pub fn empirical_loss_estimate<R, S>(
    source: &S,
    data: &TaskDataset<R>,
    loss: &LossFunction<R>,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate<R>>
where
    R: Real,
    S: HypothesisSource<R>,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(loss_draws(source, &[data], loss, n_mc, seed)?.estimate(0))
}

/// Backward transfer and forgetting over the previous tasks of a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct TransferMetrics<R> {
    pub bwt: R,
    pub forgetting: R,
    pub bwt_discounted: R,
    pub forgetting_discounted: R,
}

/// BWT, forgetting, and their γ-discounted forms.
///
/// `current[t]` is the loss of the latest posterior on previous task `t`,
/// `after_training[t]` the loss stored right after task `t` was learned. The
/// plain metrics are means; the discounted ones are undivided sums weighting
/// task `t` (0-based, of `n` previous tasks) by `γ^(n-1-t)`.
pub fn bwt_and_forgetting<R: Real>(
    current: &[R],
    after_training: &[R],
    gamma: R,
) -> Result<TransferMetrics<R>> {
    check_len(current.len(), after_training.len())?;
    if current.is_empty() {
        return Err(Error::NoPreviousTasks);
    }
    if !(gamma > R::zero() && gamma <= R::one()) {
        return Err(Error::domain("discount factor must lie in (0, 1]"));
    }
    if current.iter().chain(after_training).any(|x| !x.is_finite()) {
        return Err(Error::domain("losses must be finite"));
    }
    let n = current.len();
    let nr = R::lit(n as f64);
    let bwt = current.iter().copied().sum::<R>() / nr;
    let forgetting = current
        .iter()
        .zip(after_training)
        .map(|(&c, &a)| c - a)
        .sum::<R>()
        / nr;
    let mut bwt_discounted = R::zero();
    let mut forgetting_discounted = R::zero();
    let mut weight = R::one();
    for t in (0..n).rev() {
        bwt_discounted += weight * current[t];
        forgetting_discounted += weight * (current[t] - after_training[t]);
        weight *= gamma;
    }
    Ok(TransferMetrics {
        bwt,
        forgetting,
        bwt_discounted,
        forgetting_discounted,
    })
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CheckpointRecord<R> {
    pub checkpoint: usize,
    /// Number of tasks learned so far (1-based index of the latest task).
    pub task_id: usize,
    /// Absent at the first task.
    pub transfer: Option<TransferMetrics<R>>,
    /// Mean of the just-after-training losses of tasks `1..=task_id`.
    pub fwd_loss: R,
    pub bound: Option<BoundReport<R>>,
    /// Combined Monte-Carlo standard error of the forgetting estimate and its bound.
    pub mc_stderr: R,
    /// Losses of the current posterior on each previous task.
    pub current_losses: Vec<R>,
}

/// Per-checkpoint metrics over a task sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct MetricsLog<R> {
    pub records: Vec<CheckpointRecord<R>>,
}

pub const METRICS_CSV_HEADER: [&str; 9] = [
    "checkpoint",
    "task_id",
    "bwt",
    "forgetting",
    "fwd_loss",
    "bwt_disc",
    "forget_disc",
    "bwt_bound",
    "forget_bound",
];

impl<R: Real> MetricsLog<R> {
    pub fn push(&mut self, record: CheckpointRecord<R>) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&CheckpointRecord<R>> {
        self.records.last()
    }

    /// Writes the CSV form. Missing values are written as `NaN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_CSV_HEADER)?;
        let fmt = |x: Option<R>| match x {
            Some(v) => format!("{}", v.to_f64_lossy()),
            None => "NaN".to_string(),
        };
        for r in &self.records {
            let tr = r.transfer.as_ref();
            let b = r.bound.as_ref();
            w.write_record([
                r.checkpoint.to_string(),
                r.task_id.to_string(),
                fmt(tr.map(|t| t.bwt)),
                fmt(tr.map(|t| t.forgetting)),
                fmt(Some(r.fwd_loss)),
                fmt(tr.map(|t| t.bwt_discounted)),
                fmt(tr.map(|t| t.forgetting_discounted)),
                fmt(b.map(|b| b.total_bwt_bound)),
                fmt(b.map(|b| b.total_forgetting_bound)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

/// One parsed row of a metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub checkpoint: usize,
    pub task_id: usize,
    pub bwt: f64,
    pub forgetting: f64,
    pub fwd_loss: f64,
    pub bwt_disc: f64,
    pub forget_disc: f64,
    pub bwt_bound: f64,
    pub forget_bound: f64,
}

pub fn read_metrics_csv<Rd: std::io::Read>(input: Rd) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(METRICS_CSV_HEADER.iter().copied()) {
        return Err(Error::Io(format!("unexpected metrics header: {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("column {}: {e}", METRICS_CSV_HEADER[i])))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i]
                .parse::<usize>()
                .map_err(|e| Error::Io(format!("column {}: {e}", METRICS_CSV_HEADER[i])))
        };
        rows.push(MetricsRow {
            checkpoint: u(0)?,
            task_id: u(1)?,
            bwt: f(2)?,
            forgetting: f(3)?,
            fwd_loss: f(4)?,
            bwt_disc: f(5)?,
            forget_disc: f(6)?,
            bwt_bound: f(7)?,
            forget_bound: f(8)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores class 1 when the first feature is positive.
    #[derive(Clone)]
    struct SignClassifier;

    impl Hypothesis<f64> for SignClassifier {
        fn scores(&self, _task: usize, x: &Matrix<f64>) -> Result<Matrix<f64>> {
            let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| vec![0.0, x.get(i, 0)]).collect();
            Matrix::from_rows(&rows)
        }
    }

    #[derive(Clone)]
    struct ConstantClassifier(usize);

    impl Hypothesis<f64> for ConstantClassifier {
        fn scores(&self, _task: usize, x: &Matrix<f64>) -> Result<Matrix<f64>> {
            let mut m = Matrix::zeros(x.rows(), 2);
            for i in 0..x.rows() {
                m.row_mut(i)[self.0] = 1.0;
            }
            Ok(m)
        }
    }

    /// Picks the sign classifier or the constant one with probability 1/2.
    struct Coin;

    #[derive(Clone)]
    enum Either {
        Sign,
        Const,
    }

    impl Hypothesis<f64> for Either {
        fn scores(&self, task: usize, x: &Matrix<f64>) -> Result<Matrix<f64>> {
            match self {
                Either::Sign => SignClassifier.scores(task, x),
                Either::Const => ConstantClassifier(1).scores(task, x),
            }
        }
    }

    impl HypothesisSource<f64> for Coin {
        type Draw = Either;
        fn draw(&self, rng: &mut SimRng) -> Either {
            use rand::Rng;
            if rng.gen_bool(0.5) {
                Either::Sign
            } else {
                Either::Const
            }
        }
    }

    fn balanced() -> TaskDataset<f64> {
        let xs = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        TaskDataset::new(0, Matrix::from_rows(&xs).unwrap(), vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn perfect_classifier_has_zero_loss() {
        let l = empirical_loss(&PointMass(SignClassifier), &balanced(), &LossFunction::zero_one(), 5, 0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn constant_classifier_on_balanced_labels_is_one_half() {
        let l = empirical_loss(&PointMass(ConstantClassifier(0)), &balanced(), &LossFunction::zero_one(), 1, 0)
            .unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn point_mass_matches_point_evaluation_for_any_mc_size() {
        let data = balanced();
        let loss = LossFunction::zero_one();
        let direct = ConstantClassifier(1).empirical_loss(&data, &loss).unwrap();
        for n in [1, 7, 100] {
            assert_eq!(empirical_loss(&PointMass(ConstantClassifier(1)), &data, &loss, n, 3).unwrap(), direct);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let empty = TaskDataset::new(0, Matrix::<f64>::zeros(0, 1), vec![]).unwrap();
        let err = empirical_loss(&PointMass(SignClassifier), &empty, &LossFunction::zero_one(), 1, 0);
        assert_eq!(err, Err(Error::EmptyDataset));
    }

    #[test]
    fn clamped_cross_entropy_stays_in_range() {
        let loss = LossFunction::clamped_cross_entropy(2.0).unwrap();
        assert_eq!(loss.eval(&[0.0, 100.0], 0), 2.0);
        let v = loss.eval(&[0.0, 0.0], 1);
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert!(loss.eval(&[50.0, -50.0], 0) >= 0.0);
    }

    #[test]
    fn mc_estimates_from_different_seeds_agree() {
        let data = balanced();
        let loss = LossFunction::zero_one();
        let n = 10_000;
        for rep in 0..5u64 {
            let a = empirical_loss(&Coin, &data, &loss, n, 2 * rep).unwrap();
            let b = empirical_loss(&Coin, &data, &loss, n, 2 * rep + 1).unwrap();
            assert!((a - b).abs() < 3.0 / (n as f64).sqrt(), "{a} vs {b}");
        }
    }

    #[test]
    fn bwt_and_forgetting_examples() {
        let m = bwt_and_forgetting(&[0.3, 0.3], &[0.3, 0.3], 0.95).unwrap();
        assert_eq!(m.forgetting, 0.0);

        let m = bwt_and_forgetting::<f64>(&[0.2, 0.4], &[0.1, 0.1], 0.95).unwrap();
        assert!((m.bwt - 0.3).abs() < 1e-15);
        assert!((m.forgetting - 0.2).abs() < 1e-15);
        assert!((m.bwt_discounted - 0.59).abs() < 1e-15);
        assert!((m.forgetting_discounted - (0.95 * 0.1 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn bwt_and_forgetting_errors() {
        assert_eq!(
            bwt_and_forgetting(&[0.1, 0.2], &[0.1], 1.0),
            Err(Error::VectorLength { expected: 2, got: 1 })
        );
        assert_eq!(bwt_and_forgetting::<f64>(&[], &[], 1.0), Err(Error::NoPreviousTasks));
        assert!(bwt_and_forgetting(&[0.1], &[0.1], 0.0).is_err());
    }

    #[test]
    fn csv_marks_missing_values() {
        let mut log = MetricsLog::<f64>::default();
        log.push(CheckpointRecord {
            checkpoint: 0,
            task_id: 1,
            transfer: None,
            fwd_loss: 0.25,
            bound: None,
            mc_stderr: 0.0,
            current_losses: vec![],
        });
        let s = log.to_csv_string().unwrap();
        assert_eq!(
            s,
            "checkpoint,task_id,bwt,forgetting,fwd_loss,bwt_disc,forget_disc,bwt_bound,forget_bound\n\
             0,1,NaN,NaN,0.25,NaN,NaN,NaN,NaN\n"
        );
        let rows = read_metrics_csv(s.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].bwt.is_nan());
        assert_eq!(rows[0].fwd_loss, 0.25);
    }
}
