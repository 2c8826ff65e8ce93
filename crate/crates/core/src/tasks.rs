//! Synthetic Gaussian binary-classification environments.
//!
//! Every task draws `x ~ N(0, I₁₀)` and labels it by the sign of `aᵀx` with
//! `a = (cos θ, sin θ, 0, …, 0)`. Environments differ only in how the angles
//! `θ_t` evolve over the task sequence.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::TaskDataset;
use crate::rng;
use crate::scalar::Real;

/// Input dimension of every task.
pub const FEATURE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentKind {
    /// Every angle within `max_dev` of the reference angle.
    Similar,
    /// Each angle moves by at most `max_dev` from the previous one, always in
    /// the same direction.
    Gradual,
    /// The first half of the tasks near the reference angle, the rest near
    /// the reference plus a right angle.
    Orthogonal,
}

impl EnvironmentKind {
    pub const ALL: [EnvironmentKind; 3] = [
        EnvironmentKind::Similar,
        EnvironmentKind::Gradual,
        EnvironmentKind::Orthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvironmentKind::Similar => "similar",
            EnvironmentKind::Gradual => "gradual",
            EnvironmentKind::Orthogonal => "orthogonal",
        }
    }
}

/// Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub kind: EnvironmentKind,
    pub tasks: usize,
    #[serde(default)]
    pub reference_angle: f64,
    #[serde(default = "default_max_dev")]
    pub max_dev: f64,
    /// Direction of drift for gradual environments: `+1` or `-1`.
    #[serde(default = "default_drift_sign")]
    pub drift_sign: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_dev() -> f64 {
    10f64.to_radians()
}

fn default_drift_sign() -> f64 {
    1.0
}

impl EnvironmentConfig {
    pub fn new(kind: EnvironmentKind, tasks: usize) -> Self {
        Self {
            kind,
            tasks,
            reference_angle: 0.0,
            max_dev: default_max_dev(),
            drift_sign: default_drift_sign(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks == 0 {
            return Err(Error::Config("environment needs at least one task".into()));
        }
        if !(self.max_dev >= 0.0) || !self.max_dev.is_finite() || !self.reference_angle.is_finite() {
            return Err(Error::Config("angles must be finite and max_dev nonnegative".into()));
        }
        if self.drift_sign != 1.0 && self.drift_sign != -1.0 {
            return Err(Error::Config("drift_sign must be 1 or -1".into()));
        }
        Ok(())
    }
}

/// Angle `θ_t` of every task, deterministic in `cfg.seed`.
pub fn make_angle_schedule(cfg: &EnvironmentConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut g = rng::stream(cfg.seed, 0);
    let jitter = |g: &mut rng::SimRng| {
        if cfg.max_dev > 0.0 {
            g.gen_range(-cfg.max_dev..=cfg.max_dev)
        } else {
            0.0
        }
    };
    let t_total = cfg.tasks;
    let angles = match cfg.kind {
        EnvironmentKind::Similar => (0..t_total).map(|_| cfg.reference_angle + jitter(&mut g)).collect(),
        EnvironmentKind::Gradual => {
            let mut theta = cfg.reference_angle;
            let mut out = Vec::with_capacity(t_total);
            for t in 0..t_total {
                if t > 0 && cfg.max_dev > 0.0 {
                    theta += cfg.drift_sign * g.gen_range(0.0..=cfg.max_dev);
                }
                out.push(theta);
            }
            out
        }
        EnvironmentKind::Orthogonal => {
            let half = t_total / 2;
            (0..t_total)
                .map(|t| {
                    let base = if t < half {
                        cfg.reference_angle
                    } else {
                        cfg.reference_angle + FRAC_PI_2
                    };
                    base + jitter(&mut g)
                })
                .collect()
        }
    };
    Ok(angles)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Task index, also the output head used for it.
    pub task: usize,
    pub angle: f64,
    pub m_train: usize,
    pub m_test: usize,
    pub seed: u64,
}

impl TaskSpec {
    /// Separator `(cos θ, sin θ, 0, …, 0)`.
    pub fn separator(&self) -> [f64; FEATURE_DIM] {
        let mut a = [0.0; FEATURE_DIM];
        a[0] = self.angle.cos();
        a[1] = self.angle.sin();
        a
    }
}

/// `1` when `aᵀx ≥ 0`, else `0`.
pub fn label_for(angle: f64, x: &[f64]) -> usize {
    let s = angle.cos() * x[0] + angle.sin() * x[1];
    usize::from(s >= 0.0)
}

fn draw_dataset<R: Real>(spec: &TaskSpec, m: usize, g: &mut rng::SimRng) -> Result<TaskDataset<R>> {
    let mut data = Vec::with_capacity(m * FEATURE_DIM);
    let mut labels = Vec::with_capacity(m);
    let mut x = [0.0f64; FEATURE_DIM];
    for _ in 0..m {
        for v in x.iter_mut() {
            *v = f64::standard_normal(g);
        }
        labels.push(label_for(spec.angle, &x));
        data.extend(x.iter().map(|&v| R::lit(v)));
    }
    TaskDataset::new(spec.task, Matrix::from_vec(m, FEATURE_DIM, data)?, labels)
}

/// Independent training and test samples for one task.
pub fn sample_task<R: Real>(spec: &TaskSpec) -> Result<(TaskDataset<R>, TaskDataset<R>)> {
    if spec.m_train == 0 || spec.m_test == 0 {
        return Err(Error::Config("m_train and m_test must be positive".into()));
    }
    let train = draw_dataset(spec, spec.m_train, &mut rng::stream(spec.seed, 0))?;
    let test = draw_dataset(spec, spec.m_test, &mut rng::stream(spec.seed, 1))?;
    Ok((train, test))
}

/// Task specs for a whole environment; task seeds derive from `cfg.seed`.
pub fn environment_specs(cfg: &EnvironmentConfig, m_train: usize, m_test: usize) -> Result<Vec<TaskSpec>> {
    let angles = make_angle_schedule(cfg)?;
    Ok(angles
        .into_iter()
        .enumerate()
        .map(|(task, angle)| TaskSpec {
            task,
            angle,
            m_train,
            m_test,
            seed: rng::derive_seed(cfg.seed, 100 + task as u64),
        })
        .collect())
}

/// One row per sample: the features followed by the label.
pub fn write_dataset_csv<R: Real, W: Write>(data: &TaskDataset<R>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..data.features.cols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.m() {
        let mut rec: Vec<String> = data.features.row(i).iter().map(|v| v.to_f64_lossy().to_string()).collect();
        rec.push(data.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_jitter_schedules() {
        let mut cfg = EnvironmentConfig::new(EnvironmentKind::Similar, 7);
        cfg.max_dev = 0.0;
        cfg.reference_angle = 0.3;
        assert!(make_angle_schedule(&cfg).unwrap().iter().all(|&a| a == 0.3));

        let mut cfg = EnvironmentConfig::new(EnvironmentKind::Orthogonal, 100);
        cfg.max_dev = 0.0;
        let a = make_angle_schedule(&cfg).unwrap();
        assert!(a[..50].iter().all(|&v| v == 0.0));
        assert!(a[50..].iter().all(|&v| v == FRAC_PI_2));
    }

    #[test]
    fn gradual_is_monotone_and_bounded() {
        let cfg = EnvironmentConfig::new(EnvironmentKind::Gradual, 10);
        let a = make_angle_schedule(&cfg).unwrap();
        for w in a.windows(2) {
            assert!(w[1] >= w[0] && w[1] - w[0] <= cfg.max_dev + 1e-15);
        }
        assert!(a[9] - a[0] <= 90f64.to_radians() + 1e-12);
        let mut neg = cfg;
        neg.drift_sign = -1.0;
        let b = make_angle_schedule(&neg).unwrap();
        assert!(b.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn labels_follow_the_separator() {
        let mut x = [0.0; FEATURE_DIM];
        x[0] = 1.0;
        assert_eq!(label_for(0.0, &x), 1);
        let mut y = x;
        for v in &mut y[2..] {
            *v = -5.0;
        }
        assert_eq!(label_for(0.0, &y), 1);
        assert_eq!(label_for(std::f64::consts::PI, &x), 0);
    }

    #[test]
    fn sampling_is_deterministic_and_disjoint() {
        let spec = TaskSpec {
            task: 2,
            angle: 0.4,
            m_train: 20,
            m_test: 20,
            seed: 5,
        };
        let (a, b) = sample_task::<f64>(&spec).unwrap();
        let (c, _) = sample_task::<f64>(&spec).unwrap();
        assert_eq!(a, c);
        assert_ne!(a.features, b.features);
        assert_eq!(a.task, 2);
        for i in 0..a.m() {
            assert_eq!(a.labels[i], label_for(0.4, &a.features.row(i).to_vec()));
        }
    }

    #[test]
    fn csv_dump_has_eleven_columns() {
        let spec = TaskSpec {
            task: 0,
            angle: 0.0,
            m_train: 3,
            m_test: 1,
            seed: 1,
        };
        let (a, _) = sample_task::<f64>(&spec).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
    }
}
