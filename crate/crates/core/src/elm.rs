//! Random-projection network with an analytic readout.
//!
//! Training is three steps: draw a frozen Gaussian projection `W₁, b₁`, map
//! the inputs to `H = max(0, X W₁ + b₁)`, then solve `H W₂ ≈ Y` in closed form
//! for one-hot targets `Y`. Only `W₂` is learned.

use std::time::Instant;

use thiserror::Error;

use crate::data::Dataset;
use crate::linalg::{self, LinalgError, Matrix, SolverKind};
use crate::rng::GaussianRng;

#[derive(Debug, Error)]
pub enum ElmError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} at index {index} is outside 0..{num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("expected {expected} input features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, ElmError>;

/// Frozen random projection. `W₁` is drawn first in row-major order, then
/// `b₁`, all from one [`GaussianRng`] stream keyed by `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalacticLayer {
    w1: Matrix,
    b1: Vec<f64>,
    seed: u64,
}

impl GalacticLayer {
    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    /// Hidden width `d`.
    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    /// `max(0, X W₁ + b₁)`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(ElmError::FeatureMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let mut h = linalg::matmul(x, &self.w1)?;
        let d = self.dim();
        for row in h.data_mut().chunks_exact_mut(d) {
            for (v, b) in row.iter_mut().zip(&self.b1) {
                *v = (*v + b).max(0.0);
            }
        }
        Ok(h)
    }
}

pub fn init_galactic(input_dim: usize, d: usize, seed: u64) -> Result<GalacticLayer> {
    if input_dim == 0 || d == 0 {
        return Err(ElmError::InvalidArgument(format!(
            "projection needs input_dim >= 1 and d >= 1, got {input_dim} and {d}"
        )));
    }
    let mut rng = GaussianRng::new(seed);
    let w1 = Matrix::from_fn(input_dim, d, |_, _| rng.next_gaussian());
    let b1 = (0..d).map(|_| rng.next_gaussian()).collect();
    Ok(GalacticLayer { w1, b1, seed })
}

pub fn project(layer: &GalacticLayer, x: &Matrix) -> Result<Matrix> {
    layer.project(x)
}

/// 0/1 target matrix with one row per label.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), num_classes);
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(ElmError::LabelOutOfRange {
                index: i,
                label,
                num_classes,
            });
        }
        y.data_mut()[i * num_classes + label] = 1.0;
    }
    Ok(y)
}

/// Trained model. Immutable; share freely across threads.
#[derive(Debug, Clone)]
pub struct VoodooModel {
    layer: GalacticLayer,
    w2: Matrix,
    num_classes: usize,
    solver_used: SolverKind,
    train_seconds: f64,
    solve_seconds: f64,
}

impl VoodooModel {
    /// Reassembles a model from its parts (used when loading from disk).
    pub fn from_parts(layer: GalacticLayer, w2: Matrix, solver_used: SolverKind) -> Result<Self> {
        if w2.rows() != layer.dim() || w2.cols() == 0 {
            return Err(ElmError::InvalidArgument(format!(
                "readout of shape {:?} does not fit a projection of width {}",
                w2.shape(),
                layer.dim()
            )));
        }
        Ok(Self {
            num_classes: w2.cols(),
            layer,
            w2,
            solver_used,
            train_seconds: 0.0,
            solve_seconds: 0.0,
        })
    }

    pub fn layer(&self) -> &GalacticLayer {
        &self.layer
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn solver_used(&self) -> SolverKind {
        self.solver_used
    }

    /// Wall-clock seconds for projection plus solve.
    pub fn train_seconds(&self) -> f64 {
        self.train_seconds
    }

    /// Wall-clock seconds spent in the readout solve alone.
    pub fn solve_seconds(&self) -> f64 {
        self.solve_seconds
    }

    /// Class scores `H W₂`.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.layer.project(x)?;
        Ok(linalg::matmul(&h, &self.w2)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.layer.input_dim() {
            return Err(ElmError::FeatureMismatch {
                expected: self.layer.input_dim(),
                found: x.cols(),
            });
        }
        // Chunked so wide projections of large test sets stay bounded in memory.
        const CHUNK: usize = 4096;
        let mut preds = Vec::with_capacity(x.rows());
        for start in (0..x.rows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.rows());
            let rows: Vec<usize> = (start..end).collect();
            let scores = self.scores(&x.select_rows(&rows))?;
            preds.extend(argmax_rows(&scores));
        }
        Ok(preds)
    }
}

/// Runs projection, one-hot encoding and the readout solve.
pub fn train(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    d: usize,
    seed: u64,
    kind: SolverKind,
) -> Result<VoodooModel> {
    if x.rows() == 0 {
        return Err(ElmError::Empty);
    }
    if labels.len() != x.rows() {
        return Err(ElmError::LengthMismatch {
            left: x.rows(),
            right: labels.len(),
        });
    }
    kind.validate()?;
    let y = one_hot(labels, num_classes)?;
    let start = Instant::now();
    let layer = init_galactic(x.cols(), d, seed)?;
    let h = layer.project(x)?;
    let solve_start = Instant::now();
    let solution = linalg::solve_readout_owned(h, &y, kind)?;
    let solve_seconds = solve_start.elapsed().as_secs_f64();
    Ok(VoodooModel {
        layer,
        w2: solution.w2,
        num_classes,
        solver_used: solution.solver_used,
        train_seconds: start.elapsed().as_secs_f64(),
        solve_seconds,
    })
}

pub fn train_dataset(data: &Dataset, d: usize, seed: u64, kind: SolverKind) -> Result<VoodooModel> {
    train(data.x(), data.labels(), data.num_classes(), d, seed, kind)
}

pub fn predict(model: &VoodooModel, x: &Matrix) -> Result<Vec<usize>> {
    model.predict(x)
}

/// Row-wise argmax; the lowest index wins ties.
pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    (0..scores.rows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of positions where `preds` and `truth` agree.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(ElmError::LengthMismatch {
            left: preds.len(),
            right: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(ElmError::Empty);
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}
