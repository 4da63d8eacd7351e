//! Neural class-specific regression: a sigmoid MLP trunk `g(x)` followed by
//! a linear head, trained against (stacked) class-specific targets.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::targets::TargetMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Hidden sigmoid layers plus a linear head `y = head^T h`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub layers: Vec<DenseLayer>,
    /// `L x d_out`
    pub head: Matrix,
}

impl NeuralModel {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.head.rows(), |l| l.weight.cols())
    }

    /// Width `L` of the representation fed to the head.
    pub fn hidden_width(&self) -> usize {
        self.head.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.head.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum::<usize>()
            + self.head.data().len()
    }

    /// All parameters in a fixed order: per layer weight then bias, head last.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(l.weight.data());
            p.extend_from_slice(&l.bias);
        }
        p.extend_from_slice(self.head.data());
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::dim(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weight.data().len());
            l.weight.data_mut().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        self.head.data_mut().copy_from_slice(rest);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
            && self.head.is_finite()
    }
}

/// Glorot-uniform weights, zero biases. `hidden = []` yields a bare linear head.
pub fn init_network(dims: usize, hidden: &[usize], d_out: usize, seed: u64) -> Result<NeuralModel> {
    if dims == 0 || d_out == 0 || hidden.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
    };
    let mut layers = Vec::with_capacity(hidden.len());
    let mut fan_in = dims;
    for &width in hidden {
        layers.push(DenseLayer {
            weight: glorot(width, fan_in, fan_in, width),
            bias: vec![0.0; width],
        });
        fan_in = width;
    }
    let head = glorot(fan_in, d_out, fan_in, d_out);
    Ok(NeuralModel { layers, head })
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn check_input(model: &NeuralModel, x: &Matrix) -> Result<()> {
    if x.rows() != model.input_dim() {
        return Err(Error::dim(format!(
            "network expects {}-dimensional input, got {}",
            model.input_dim(),
            x.rows()
        )));
    }
    Ok(())
}

/// Activations of every layer; `[0]` is the input itself.
fn activations(model: &NeuralModel, x: &Matrix) -> Vec<Matrix> {
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(x.clone());
    for layer in &model.layers {
        let mut z = layer.weight.matmul(acts.last().unwrap());
        for j in 0..z.cols() {
            for (v, b) in z.col_mut(j).iter_mut().zip(&layer.bias) {
                *v = sigmoid(*v + b);
            }
        }
        acts.push(z);
    }
    acts
}

/// Hidden representation `H` (`L x M`) and output `y = head^T H`.
pub fn forward(model: &NeuralModel, x: &Matrix) -> Result<(Matrix, Matrix)> {
    check_input(model, x)?;
    let h = activations(model, x).pop().unwrap();
    let y = model.head.t_matmul(&h);
    Ok((h, y))
}

/// Mean squared loss `(1/M) ||head^T H - T||_F^2`.
pub fn loss(model: &NeuralModel, x: &Matrix, t: &Matrix) -> Result<f64> {
    let (_, y) = forward(model, x)?;
    if y.shape() != t.shape() {
        return Err(Error::dim(format!("output {:?} vs targets {:?}", y.shape(), t.shape())));
    }
    Ok(y.sub(t).frobenius_sq() / x.cols() as f64)
}

/// Gradients laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
    pub head: Matrix,
}

impl Gradients {
    fn zeros_like(model: &NeuralModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            head: Matrix::zeros(model.head.rows(), model.head.cols()),
        }
    }

    /// Same ordering as [`NeuralModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for l in &self.layers {
            p.extend_from_slice(l.weight.data());
            p.extend_from_slice(&l.bias);
        }
        p.extend_from_slice(self.head.data());
        p
    }
}

/// Exact gradients of [`loss`] with respect to every parameter.
pub fn backward(model: &NeuralModel, x: &Matrix, t: &Matrix) -> Result<Gradients> {
    check_input(model, x)?;
    let acts = activations(model, x);
    let h = acts.last().unwrap();
    let y = model.head.t_matmul(h);
    if y.shape() != t.shape() {
        return Err(Error::dim(format!("output {:?} vs targets {:?}", y.shape(), t.shape())));
    }
    let m = x.cols() as f64;
    let grad_y = y.sub(t).scale(2.0 / m);
    let head = h.matmul_t(&grad_y);

    let mut upstream = model.head.matmul(&grad_y);
    let mut layers = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate().rev() {
        let out = &acts[l + 1];
        let mut delta = upstream;
        for (d, a) in delta.data_mut().iter_mut().zip(out.data()) {
            *d *= a * (1.0 - a);
        }
        layers.push(DenseLayer {
            weight: delta.matmul_t(&acts[l]),
            bias: delta.row_sums(),
        });
        upstream = layer.weight.t_matmul(&delta);
    }
    layers.reverse();
    Ok(Gradients { layers, head })
}

/// Target rows of several classes stacked vertically, with the row range
/// owned by each class.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedTargets {
    pub t: Matrix,
    pub blocks: BTreeMap<u32, Range<usize>>,
}

impl StackedTargets {
    pub fn stack(parts: Vec<(u32, TargetMatrix)>) -> Result<Self> {
        let n = parts
            .first()
            .map(|(_, t)| t.t.cols())
            .ok_or(Error::EmptyInput("no target blocks to stack"))?;
        let rows: usize = parts.iter().map(|(_, t)| t.t.rows()).sum();
        let mut t = Matrix::zeros(rows, n);
        let mut blocks = BTreeMap::new();
        let mut offset = 0;
        for (p, part) in parts {
            if part.t.cols() != n {
                return Err(Error::dim(format!(
                    "class {p} targets cover {} samples, expected {n}",
                    part.t.cols()
                )));
            }
            let r = part.t.rows();
            for j in 0..n {
                t.col_mut(j)[offset..offset + r].copy_from_slice(part.t.col(j));
            }
            if blocks.insert(p, offset..offset + r).is_some() {
                return Err(Error::InvalidArgument(format!("class {p} stacked twice")));
            }
            offset += r;
        }
        Ok(Self { t, blocks })
    }

    pub fn single(p: u32, t: TargetMatrix) -> Self {
        let rows = t.t.rows();
        Self {
            t: t.t,
            blocks: BTreeMap::from([(p, 0..rows)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Minibatch,
    BatchClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub momentum: f64,
    /// Ridge for the closed-form head; `None` uses `1e-8 * trace(H H^T) / L`.
    #[serde(default)]
    pub head_ridge: Option<f64>,
}

fn default_learning_rate() -> f64 {
    1e-7
}

fn default_batch_size() -> usize {
    200
}

fn default_epochs() -> usize {
    40
}

fn default_mode() -> TrainMode {
    TrainMode::Minibatch
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            mode: default_mode(),
            seed: 0,
            momentum: 0.0,
            head_ridge: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero step is allowed: it freezes the model, which tests rely on
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if let Some(r) = self.head_ridge {
            if !(r >= 0.0) {
                return Err(Error::InvalidArgument(format!("head ridge must be non-negative, got {r}")));
            }
        }
        Ok(())
    }
}

/// Least-squares head for fixed hidden parameters: `(H H^T + ridge I)^{-1} H T^T`.
pub fn solve_head(model: &NeuralModel, x: &Matrix, t: &Matrix, ridge: Option<f64>) -> Result<Matrix> {
    check_input(model, x)?;
    let h = activations(model, x).pop().unwrap();
    let gram = h.gram();
    let ridge = ridge.unwrap_or_else(|| 1e-8 * gram.trace() / gram.rows() as f64);
    solve_spd(&gram, &h.matmul_t(t), ridge).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => {
            Error::Singular("hidden representation is rank-deficient; raise head_ridge".into())
        }
        other => other,
    })
}

fn sgd_step(
    model: &mut NeuralModel,
    grads: &Gradients,
    velocity: &mut Gradients,
    momentum: f64,
    lr: f64,
    head: bool,
) {
    let step = |p: &mut [f64], g: &[f64], v: &mut [f64]| {
        for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = momentum * *v - lr * g;
            *p += *v;
        }
    };
    for ((layer, g), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        step(layer.weight.data_mut(), g.weight.data(), v.weight.data_mut());
        step(&mut layer.bias, &g.bias, &mut v.bias);
    }
    if head {
        step(model.head.data_mut(), grads.head.data(), velocity.head.data_mut());
    }
}

/// Trains the network and returns it with the full-data loss after each epoch.
///
/// `Minibatch` shuffles with the config seed every epoch and updates all
/// parameters by SGD (the last partial batch is kept). `BatchClosedForm`
/// sets the head to its least-squares optimum on the full data each epoch,
/// then takes one gradient step on the hidden parameters with that head held
/// fixed.
pub fn train(
    mut model: NeuralModel,
    x: &Matrix,
    targets: &StackedTargets,
    cfg: &TrainConfig,
) -> Result<(NeuralModel, Vec<f64>)> {
    cfg.validate()?;
    check_input(&model, x)?;
    let t = &targets.t;
    if t.cols() != x.cols() || t.rows() != model.output_dim() {
        return Err(Error::dim(format!(
            "targets {:?} do not match {} samples and {} outputs",
            t.shape(),
            x.cols(),
            model.output_dim()
        )));
    }
    let n = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        match cfg.mode {
            TrainMode::Minibatch => {
                order.shuffle(&mut rng);
                for batch in order.chunks(cfg.batch_size) {
                    let xb = x.select_cols(batch);
                    let tb = t.select_cols(batch);
                    let grads = backward(&model, &xb, &tb)?;
                    sgd_step(&mut model, &grads, &mut velocity, cfg.momentum, lr, true);
                }
            }
            TrainMode::BatchClosedForm => {
                model.head = solve_head(&model, x, t, cfg.head_ridge)?;
                if !model.layers.is_empty() {
                    let grads = backward(&model, x, t)?;
                    sgd_step(&mut model, &grads, &mut velocity, cfg.momentum, lr, false);
                }
            }
        }
        let l = loss(&model, x, t)?;
        if !l.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch, loss: l });
        }
        trace.push(l);
    }
    Ok((model, trace))
}

/// Forward pass restricted to the output rows owned by class `p`.
pub fn project_neural(
    model: &NeuralModel,
    blocks: &BTreeMap<u32, Range<usize>>,
    p: u32,
    x: &Matrix,
) -> Result<Matrix> {
    let range = blocks.get(&p).ok_or(Error::UnknownClass(p))?;
    if range.end > model.output_dim() {
        return Err(Error::dim(format!(
            "class {p} block {range:?} exceeds {} outputs",
            model.output_dim()
        )));
    }
    let (_, y) = forward(model, x)?;
    Ok(y.row_range(range.start, range.end))
}

/// A trained shared network plus what verification needs per class.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralBundle {
    pub model: NeuralModel,
    pub blocks: BTreeMap<u32, Range<usize>>,
    pub class_means: BTreeMap<u32, Vec<f64>>,
}

impl NeuralBundle {
    pub fn embed(&self, p: u32, x: &Matrix) -> Result<Matrix> {
        project_neural(&self.model, &self.blocks, p, x)
    }
}
