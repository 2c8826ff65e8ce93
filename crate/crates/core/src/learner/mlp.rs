use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::Hypothesis;
use crate::rng::SimRng;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Fully connected trunk shared by all tasks, plus one linear head per task.
///
/// Parameters live in one flat vector: each trunk layer's weights (stored
/// input-major, `[in][out]`) followed by its bias, then every head in task
/// order with the same layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub n_tasks: usize,
    pub classes_per_task: usize,
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub offset: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl LayerSlot {
    #[inline]
    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    #[inline]
    pub fn bias(&self) -> Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }

    #[inline]
    pub fn len(&self) -> usize {
        (self.n_in + 1) * self.n_out
    }

    pub fn is_empty(&self) -> bool {
        self.n_out == 0
    }
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, n_tasks: usize, classes_per_task: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_dims,
            activation: Activation::Tanh,
            n_tasks,
            classes_per_task,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_tasks == 0 || self.classes_per_task == 0 {
            return Err(Error::Config(
                "input_dim, n_tasks and classes_per_task must be positive".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Width of the representation fed to the heads.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub fn trunk_slots(&self) -> Vec<LayerSlot> {
        let mut slots = Vec::with_capacity(self.hidden_dims.len());
        let mut offset = 0;
        let mut n_in = self.input_dim;
        for &n_out in &self.hidden_dims {
            let s = LayerSlot { offset, n_in, n_out };
            offset += s.len();
            n_in = n_out;
            slots.push(s);
        }
        slots
    }

    pub fn trunk_len(&self) -> usize {
        self.trunk_slots().iter().map(LayerSlot::len).sum()
    }

    fn head_len(&self) -> usize {
        (self.feature_dim() + 1) * self.classes_per_task
    }

    pub fn head_slot(&self, task: usize) -> Result<LayerSlot> {
        if task >= self.n_tasks {
            return Err(Error::IndexOutOfRange {
                what: "task",
                index: task,
                limit: self.n_tasks,
            });
        }
        Ok(LayerSlot {
            offset: self.trunk_len() + task * self.head_len(),
            n_in: self.feature_dim(),
            n_out: self.classes_per_task,
        })
    }

    pub fn head_range(&self, task: usize) -> Result<Range<usize>> {
        let s = self.head_slot(task)?;
        Ok(s.offset..s.offset + s.len())
    }

    /// Total parameter count `d`.
    pub fn n_params(&self) -> usize {
        self.trunk_len() + self.n_tasks * self.head_len()
    }

    /// Parameters touched when training `task`: the trunk and that task's head.
    pub fn active_ranges(&self, task: usize) -> Result<[Range<usize>; 2]> {
        Ok([0..self.trunk_len(), self.head_range(task)?])
    }

    /// Symmetric-uniform initialization with bound `1/sqrt(fan_in)`.
    pub fn init_params<R: Real>(&self, rng: &mut SimRng) -> Vec<R> {
        let mut params = vec![R::zero(); self.n_params()];
        let heads = (0..self.n_tasks).map(|t| self.head_slot(t).expect("valid task"));
        for slot in self.trunk_slots().into_iter().chain(heads) {
            let bound = 1.0 / (slot.n_in as f64).sqrt();
            for p in &mut params[slot.offset..slot.offset + slot.len()] {
                *p = R::lit(rng.gen_range(-bound..bound));
            }
        }
        params
    }

    fn check_inputs<R: Real>(&self, params: &[R], task: usize, x: &Matrix<R>) -> Result<()> {
        check_len(self.n_params(), params.len())?;
        self.head_slot(task)?;
        if x.cols() != self.input_dim {
            return Err(Error::VectorLength {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        Ok(())
    }
}

/// `tanh` through one exponential; saturates cleanly at ±1.
#[inline]
fn tanh<R: Real>(x: R) -> R {
    let two = R::lit(2.0);
    R::one() - two / ((x * two).exp() + R::one())
}

/// `out = b + Σ_i input[i] · W[i, :]`.
#[inline]
fn dense<R: Real>(params: &[R], slot: &LayerSlot, input: &[R], out: &mut [R]) {
    out.copy_from_slice(&params[slot.bias()]);
    let w = &params[slot.weights()];
    for (i, &xi) in input.iter().enumerate() {
        let row = &w[i * slot.n_out..(i + 1) * slot.n_out];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

/// Per-layer activation buffers reused across samples.
pub struct Workspace<R> {
    trunk: Vec<LayerSlot>,
    head: LayerSlot,
    /// `acts[0]` is the input, `acts[l + 1]` the output of trunk layer `l`.
    acts: Vec<Vec<R>>,
    logits: Vec<R>,
    delta: Vec<Vec<R>>,
    dlogits: Vec<R>,
}

impl<R: Real> Workspace<R> {
    pub fn new(arch: &MlpArchitecture, task: usize) -> Result<Self> {
        let trunk = arch.trunk_slots();
        let head = arch.head_slot(task)?;
        let mut widths = vec![arch.input_dim];
        widths.extend(&arch.hidden_dims);
        Ok(Self {
            trunk,
            head,
            acts: widths.iter().map(|&w| vec![R::zero(); w]).collect(),
            logits: vec![R::zero(); arch.classes_per_task],
            delta: widths.iter().map(|&w| vec![R::zero(); w]).collect(),
            dlogits: vec![R::zero(); arch.classes_per_task],
        })
    }

    /// Logits of one input row; the result stays in the workspace.
    pub fn forward_row(&mut self, params: &[R], x: &[R]) -> &[R] {
        self.acts[0].copy_from_slice(x);
        for (l, slot) in self.trunk.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let out = &mut after[0];
            dense(params, slot, &before[l], out);
            for v in out.iter_mut() {
                *v = tanh(*v);
            }
        }
        let last = self.acts.last().expect("input layer present");
        dense(params, &self.head, last, &mut self.logits);
        &self.logits
    }

    /// Adds `scale · ∇_θ (-ln softmax(z)[label])` for one row into `grad`
    /// and returns the unscaled cross-entropy. Only the trunk and the active
    /// head are written.
    pub fn accumulate_ce_grad(&mut self, params: &[R], x: &[R], label: usize, scale: R, grad: &mut [R]) -> R {
        self.forward_row(params, x);
        let lse = crate::numerics::log_sum_exp(&self.logits);
        for (d, &z) in self.dlogits.iter_mut().zip(&self.logits) {
            *d = (z - lse).exp() * scale;
        }
        self.dlogits[label] -= scale;
        let loss = lse - self.logits[label];
        self.backprop(params, grad);
        loss
    }

    /// Backpropagates `self.dlogits` through the last forward pass.
    fn backprop(&mut self, params: &[R], grad: &mut [R]) {
        let n_layers = self.trunk.len();
        // head
        {
            let slot = self.head;
            let input = &self.acts[n_layers];
            accumulate_dense_grad(slot, input, &self.dlogits, grad);
            if n_layers == 0 {
                return;
            }
            let w = &params[slot.weights()];
            let delta = &mut self.delta[n_layers];
            for (i, d) in delta.iter_mut().enumerate() {
                let row = &w[i * slot.n_out..(i + 1) * slot.n_out];
                let s: R = row.iter().zip(&self.dlogits).map(|(&a, &b)| a * b).sum();
                let a = input[i];
                *d = s * (R::one() - a * a);
            }
        }
        for l in (0..n_layers).rev() {
            let slot = self.trunk[l];
            let (lower, upper) = self.delta.split_at_mut(l + 1);
            let delta_out = &upper[0];
            let input = &self.acts[l];
            accumulate_dense_grad(slot, input, delta_out, grad);
            if l == 0 {
                break;
            }
            let w = &params[slot.weights()];
            for (i, d) in lower[l].iter_mut().enumerate() {
                let row = &w[i * slot.n_out..(i + 1) * slot.n_out];
                let s: R = row.iter().zip(delta_out).map(|(&a, &b)| a * b).sum();
                let a = input[i];
                *d = s * (R::one() - a * a);
            }
        }
    }
}

#[inline]
fn accumulate_dense_grad<R: Real>(slot: LayerSlot, input: &[R], delta: &[R], grad: &mut [R]) {
    let (w, b) = grad[slot.offset..slot.offset + slot.len()].split_at_mut(slot.n_in * slot.n_out);
    for (g, &d) in b.iter_mut().zip(delta) {
        *g += d;
    }
    for (i, &xi) in input.iter().enumerate() {
        let row = &mut w[i * slot.n_out..(i + 1) * slot.n_out];
        for (g, &d) in row.iter_mut().zip(delta) {
            *g += xi * d;
        }
    }
}

/// Logits of the task's head for every row of `x`.
pub fn forward<R: Real>(params: &[R], arch: &MlpArchitecture, task: usize, x: &Matrix<R>) -> Result<Matrix<R>> {
    arch.check_inputs(params, task, x)?;
    let mut ws = Workspace::new(arch, task)?;
    let mut out = Matrix::zeros(x.rows(), arch.classes_per_task);
    for i in 0..x.rows() {
        let z = ws.forward_row(params, x.row(i));
        out.row_mut(i).copy_from_slice(z);
    }
    Ok(out)
}

/// Mean cross-entropy of a batch and its gradient with respect to every
/// parameter. Heads of other tasks get zero gradient.
pub fn backward<R: Real>(
    params: &[R],
    arch: &MlpArchitecture,
    task: usize,
    x: &Matrix<R>,
    labels: &[usize],
) -> Result<(R, Vec<R>)> {
    arch.check_inputs(params, task, x)?;
    check_len(x.rows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= arch.classes_per_task) {
        return Err(Error::IndexOutOfRange {
            what: "label",
            index: y,
            limit: arch.classes_per_task,
        });
    }
    let mut ws = Workspace::new(arch, task)?;
    let mut grad = vec![R::zero(); params.len()];
    let scale = R::one() / R::lit(labels.len() as f64);
    let mut loss = R::zero();
    for (i, &y) in labels.iter().enumerate() {
        loss += ws.accumulate_ce_grad(params, x.row(i), y, scale, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Mean cross-entropy without gradients.
pub fn cross_entropy<R: Real>(
    params: &[R],
    arch: &MlpArchitecture,
    task: usize,
    x: &Matrix<R>,
    labels: &[usize],
) -> Result<R> {
    check_len(x.rows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let z = forward(params, arch, task, x)?;
    let total: R = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| crate::numerics::log_sum_exp(z.row(i)) - z.get(i, y))
        .sum();
    Ok(total / R::lit(labels.len() as f64))
}

/// A concrete network: architecture plus one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<'a, R> {
    pub arch: &'a MlpArchitecture,
    pub params: Vec<R>,
}

impl<R: Real> Hypothesis<R> for Network<'_, R> {
    fn scores(&self, task: usize, features: &Matrix<R>) -> Result<Matrix<R>> {
        forward(&self.params, self.arch, task, features)
    }
}

/// Comparison of [`backward`] against central finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Largest relative error over coordinates with non-negligible gradient.
    pub max_rel_err: f64,
    /// Largest absolute error over coordinates whose gradients are below the floor.
    pub max_abs_err_small: f64,
    pub coordinates: usize,
}

impl GradientCheck {
    pub fn passed(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err < rel_tol && self.max_abs_err_small < abs_tol
    }
}

/// Central differences with step `h`; coordinates where both gradients are
/// below `floor` in magnitude are compared absolutely.
pub fn gradient_check(
    params: &[f64],
    arch: &MlpArchitecture,
    task: usize,
    x: &Matrix<f64>,
    labels: &[usize],
    h: f64,
    floor: f64,
) -> Result<GradientCheck> {
    let (_, grad) = backward(params, arch, task, x, labels)?;
    let mut p = params.to_vec();
    let mut out = GradientCheck {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        coordinates: p.len(),
    };
    for j in 0..p.len() {
        let orig = p[j];
        p[j] = orig + h;
        let up = cross_entropy(&p, arch, task, x, labels)?;
        p[j] = orig - h;
        let down = cross_entropy(&p, arch, task, x, labels)?;
        p[j] = orig;
        let fd = (up - down) / (2.0 * h);
        let diff = (fd - grad[j]).abs();
        let scale = fd.abs().max(grad[j].abs());
        if scale < floor {
            out.max_abs_err_small = out.max_abs_err_small.max(diff);
        } else {
            out.max_rel_err = out.max_rel_err.max(diff / scale);
        }
    }
    Ok(out)
}
