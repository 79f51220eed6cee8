//! Single-hidden-layer MLP trained by plain minibatch SGD.
//!
//! ReLU hidden layer, softmax cross-entropy loss, He-scaled Gaussian init
//! with zero biases, and a fresh full permutation of the training set every
//! epoch. Initialization and shuffling share one seeded [`GaussianRng`].

use std::time::Instant;

use thiserror::Error;

use crate::data::Dataset;
use crate::elm::argmax_rows;
use crate::linalg::{self, LinalgError, Matrix};
use crate::rng::GaussianRng;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("training diverged in epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("expected {expected} input features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("label {label} at index {index} is outside 0..{num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("empty training set")]
    Empty,
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpHyper {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 10,
            learning_rate: 0.1,
            batch_size: 64,
            seed: 42,
        }
    }
}

impl MlpHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(BaselineError::InvalidHyper("hidden must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(BaselineError::InvalidHyper("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(BaselineError::InvalidHyper("batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(BaselineError::InvalidHyper(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Weights of the two affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Matrix::zeros(input_dim, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, classes),
            b2: vec![0.0; classes],
        }
    }

    /// He init: `N(0, 2/fan_in)` weights, zero biases.
    pub fn he_init(input_dim: usize, hidden: usize, classes: usize, rng: &mut GaussianRng) -> Self {
        let s1 = (2.0 / input_dim as f64).sqrt();
        let s2 = (2.0 / hidden as f64).sqrt();
        let w1 = Matrix::from_fn(input_dim, hidden, |_, _| s1 * rng.next_gaussian());
        let w2 = Matrix::from_fn(hidden, classes, |_, _| s2 * rng.next_gaussian());
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Hidden pre-activations and class logits.
    fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.input_dim() {
            return Err(BaselineError::FeatureMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let mut z1 = linalg::matmul(x, &self.w1)?;
        add_bias(&mut z1, &self.b1);
        let mut a1 = z1.clone();
        a1.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = linalg::matmul(&a1, &self.w2)?;
        add_bias(&mut logits, &self.b2);
        Ok((z1, logits))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?.1))
    }
}

fn add_bias(m: &mut Matrix, b: &[f64]) {
    let cols = m.cols();
    if cols == 0 {
        return;
    }
    for row in m.data_mut().chunks_exact_mut(cols) {
        row.iter_mut().zip(b).for_each(|(v, b)| *v += b);
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        out.iter_mut().zip(m.row(i)).for_each(|(s, v)| *s += v);
    }
    out
}

/// Mean cross-entropy and its gradient with respect to every parameter.
pub fn loss_and_gradients(params: &MlpParams, x: &Matrix, labels: &[usize]) -> Result<(f64, MlpParams)> {
    let n = x.rows();
    if n == 0 {
        return Err(BaselineError::Empty);
    }
    if labels.len() != n {
        return Err(BaselineError::LengthMismatch { rows: n, labels: labels.len() });
    }
    let c = params.num_classes();
    if let Some(i) = labels.iter().position(|&l| l >= c) {
        return Err(BaselineError::LabelOutOfRange {
            index: i,
            label: labels[i],
            num_classes: c,
        });
    }
    let (z1, logits) = params.forward(x)?;

    // Softmax in place; dZ2 = (P - Y) / n.
    let mut dz2 = logits;
    let mut loss = 0.0;
    for (i, row) in dz2.data_mut().chunks_exact_mut(c).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[labels[i]];
        for v in row.iter_mut() {
            *v = (*v - log_z).exp() / n as f64;
        }
        row[labels[i]] -= 1.0 / n as f64;
    }
    loss /= n as f64;

    let mut a1 = z1.clone();
    a1.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let dw2 = linalg::matmul_tn(&a1, &dz2)?;
    let db2 = column_sums(&dz2);
    let mut dz1 = linalg::matmul(&dz2, &params.w2.transpose())?;
    for (g, z) in dz1.data_mut().iter_mut().zip(z1.as_slice()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    let dw1 = linalg::matmul_tn(x, &dz1)?;
    let db1 = column_sums(&dz1);
    Ok((
        loss,
        MlpParams {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        },
    ))
}

/// Largest relative error between the analytic gradient and central
/// differences with step `epsilon`, over every parameter. Relative error is
/// `|a - f| / max(|a|, |f|, 1e-3)` so near-zero gradients are judged on an
/// absolute scale.
pub fn gradient_check(params: &MlpParams, x: &Matrix, labels: &[usize], epsilon: f64) -> Result<f64> {
    let (_, analytic) = loss_and_gradients(params, x, labels)?;
    let mut probe = params.clone();
    let mut worst = 0.0_f64;

    let mut check = |probe: &mut MlpParams, get: &dyn Fn(&mut MlpParams) -> &mut f64, a: f64| -> Result<()> {
        let orig = *get(probe);
        *get(probe) = orig + epsilon;
        let plus = loss_and_gradients(probe, x, labels)?.0;
        *get(probe) = orig - epsilon;
        let minus = loss_and_gradients(probe, x, labels)?.0;
        *get(probe) = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max(rel);
        Ok(())
    };

    for k in 0..params.w1.as_slice().len() {
        check(&mut probe, &|p| &mut p.w1.data_mut()[k], analytic.w1.as_slice()[k])?;
    }
    for k in 0..params.b1.len() {
        check(&mut probe, &|p| &mut p.b1[k], analytic.b1[k])?;
    }
    for k in 0..params.w2.as_slice().len() {
        check(&mut probe, &|p| &mut p.w2.data_mut()[k], analytic.w2.as_slice()[k])?;
    }
    for k in 0..params.b2.len() {
        check(&mut probe, &|p| &mut p.b2[k], analytic.b2[k])?;
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    params: MlpParams,
    hyper: MlpHyper,
    epoch_losses: Vec<f64>,
    train_seconds: f64,
}

impl MlpModel {
    pub fn from_parts(params: MlpParams, hyper: MlpHyper) -> Self {
        Self {
            params,
            hyper,
            epoch_losses: Vec::new(),
            train_seconds: 0.0,
        }
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn hyper(&self) -> &MlpHyper {
        &self.hyper
    }

    /// Mean training loss of each epoch, in order.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn train_seconds(&self) -> f64 {
        self.train_seconds
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.params.predict(x)
    }
}

pub fn mlp_predict(model: &MlpModel, x: &Matrix) -> Result<Vec<usize>> {
    model.predict(x)
}

pub fn train_sgd(data: &Dataset, hyper: MlpHyper) -> Result<MlpModel> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(BaselineError::Empty);
    }
    let start = Instant::now();
    let n = data.len();
    let mut rng = GaussianRng::new(hyper.seed);
    let mut params = MlpParams::he_init(data.feature_dim(), hyper.hidden, data.num_classes(), &mut rng);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let lr = hyper.learning_rate;

    for epoch in 1..=hyper.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let xb = data.x().select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, &xb, &yb)?;
            if !loss.is_finite() {
                return Err(BaselineError::Divergence { epoch, loss });
            }
            total += loss * batch.len() as f64;
            sgd_step(&mut params, &grads, lr);
        }
        let mean = total / n as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(BaselineError::Divergence { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }

    Ok(MlpModel {
        params,
        hyper,
        epoch_losses,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

fn sgd_step(params: &mut MlpParams, grads: &MlpParams, lr: f64) {
    linalg::axpy(-lr, grads.w1.as_slice(), params.w1.data_mut());
    linalg::axpy(-lr, &grads.b1, &mut params.b1);
    linalg::axpy(-lr, grads.w2.as_slice(), params.w2.data_mut());
    linalg::axpy(-lr, &grads.b2, &mut params.b2);
}
