//! Pixel classifier trained against soft cell-level labels.
//!
//! A leaf cell `s` with inferred label `y_s` supervises the mean of the
//! pixel probabilities inside it, `P_s = mean_{j in s} p_j`, through the
//! soft binary cross-entropy `-(y_s ln P_s + (1 - y_s) ln(1 - P_s))`. For
//! single-pixel cells this is ordinary per-pixel cross-entropy.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{CellId, Frontier};
use crate::raster::{FeatureStack, LabelMap, SparseLabels};

/// Probabilities are kept in `[EPS, 1 - EPS]` so logs stay finite.
pub const EPS: f64 = 1e-7;

const CHECKPOINT_MAGIC: &[u8] = b"SKIHL-MODEL 1\n";

/// A differentiable map from per-pixel inputs to flood probability.
pub trait PixelClassifier {
    /// Per-raster input cache built once and reused across epochs.
    type Input;

    fn prepare(&self, features: &FeatureStack) -> Result<Self::Input>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Clipped probabilities for the given row-major pixel indices.
    fn forward(&self, input: &Self::Input, pixels: &[usize]) -> Vec<f64>;

    /// Gradient of `sum_j upstream[j] * p_j` with respect to the parameters.
    fn backward(&self, input: &Self::Input, pixels: &[usize], upstream: &[f64]) -> Vec<f64>;
}

/// Full-raster probability map.
pub fn predict<C: PixelClassifier>(classifier: &C, features: &FeatureStack) -> Result<LabelMap> {
    let input = classifier.prepare(features)?;
    let pixels: Vec<usize> = (0..features.pixel_count()).collect();
    LabelMap::new(features.rows(), features.cols(), classifier.forward(&input, &pixels))
}

/// One-hidden-layer network over a pixel's bands, its elevation and the
/// 3x3 neighbourhood mean of each band.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceClassifier {
    bands: usize,
    hidden: usize,
    theta: Vec<f64>,
}

/// Row-major `pixels x (2 * bands + 1)` design matrix.
#[derive(Debug, Clone)]
pub struct ReferenceInput {
    dim: usize,
    rows: Vec<f64>,
}

impl ReferenceClassifier {
    pub const DEFAULT_HIDDEN: usize = 16;

    pub fn new(bands: usize, hidden: usize, seed: u64) -> Self {
        let n = Self::param_count(bands, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self { bands, hidden, theta }
    }

    /// Rebuilds a classifier from a flat parameter vector.
    pub fn from_params(bands: usize, theta: Vec<f64>) -> Result<Self> {
        let per_unit = Self::input_dim(bands) + 2;
        if bands == 0 || theta.len() < per_unit + 1 || !(theta.len() - 1).is_multiple_of(per_unit) {
            return Err(Error::Checkpoint(format!(
                "{} parameters do not fit a {bands}-band network",
                theta.len()
            )));
        }
        Ok(Self {
            bands,
            hidden: (theta.len() - 1) / per_unit,
            theta,
        })
    }

    pub fn input_dim(bands: usize) -> usize {
        2 * bands + 1
    }

    pub fn param_count(bands: usize, hidden: usize) -> usize {
        hidden * (Self::input_dim(bands) + 2) + 1
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    // theta = [W1 (hidden x dim) | b1 (hidden) | w2 (hidden) | b2]
    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let d = Self::input_dim(self.bands);
        let h = self.hidden;
        let (w1, rest) = self.theta.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        (w1, b1, w2, rest[0])
    }

    #[inline]
    fn pixel_forward(&self, x: &[f64], act: &mut [f64]) -> (f64, bool) {
        let (w1, b1, w2, b2) = self.split();
        let d = x.len();
        let mut out = b2;
        for h in 0..self.hidden {
            let row = &w1[h * d..(h + 1) * d];
            let z = b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            act[h] = z.tanh();
            out += w2[h] * act[h];
        }
        let p = 1.0 / (1.0 + (-out).exp());
        let clipped = !(EPS..=1.0 - EPS).contains(&p);
        (p.clamp(EPS, 1.0 - EPS), clipped)
    }
}

impl PixelClassifier for ReferenceClassifier {
    type Input = ReferenceInput;

    fn prepare(&self, features: &FeatureStack) -> Result<ReferenceInput> {
        if features.bands() != self.bands {
            return Err(Error::Dimensions(format!(
                "classifier expects {} bands, raster has {}",
                self.bands,
                features.bands()
            )));
        }
        let (rows, cols, m) = (features.rows(), features.cols(), features.bands());
        let dim = Self::input_dim(m);
        let mut out = vec![0.0; rows * cols * dim];
        let elevation = features.elevation();
        for r in 0..rows {
            for c in 0..cols {
                let p = r * cols + c;
                let x = &mut out[p * dim..(p + 1) * dim];
                for b in 0..m {
                    x[b] = features.value(b, r, c) as f64;
                }
                x[m] = elevation[p] as f64 / 100.0;
                let (r0, r1) = (r.saturating_sub(1), (r + 2).min(rows));
                let (c0, c1) = (c.saturating_sub(1), (c + 2).min(cols));
                let count = ((r1 - r0) * (c1 - c0)) as f64;
                for b in 0..m {
                    let mut s = 0.0;
                    for rr in r0..r1 {
                        for cc in c0..c1 {
                            s += features.value(b, rr, cc) as f64;
                        }
                    }
                    x[m + 1 + b] = s / count;
                }
            }
        }
        Ok(ReferenceInput { dim, rows: out })
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn forward(&self, input: &ReferenceInput, pixels: &[usize]) -> Vec<f64> {
        let mut act = vec![0.0; self.hidden];
        pixels
            .iter()
            .map(|&p| {
                let x = &input.rows[p * input.dim..(p + 1) * input.dim];
                self.pixel_forward(x, &mut act).0
            })
            .collect()
    }

    fn backward(&self, input: &ReferenceInput, pixels: &[usize], upstream: &[f64]) -> Vec<f64> {
        let d = input.dim;
        let h = self.hidden;
        let (_, _, w2, _) = self.split();
        let mut grad = vec![0.0; self.theta.len()];
        let mut act = vec![0.0; h];
        let (b1_at, w2_at, b2_at) = (h * d, h * d + h, h * d + 2 * h);
        for (&p, &up) in pixels.iter().zip(upstream) {
            if up == 0.0 {
                continue;
            }
            let x = &input.rows[p * d..(p + 1) * d];
            let (prob, clipped) = self.pixel_forward(x, &mut act);
            if clipped {
                continue;
            }
            let g_out = up * prob * (1.0 - prob);
            grad[b2_at] += g_out;
            for k in 0..h {
                grad[w2_at + k] += g_out * act[k];
                let dz = g_out * w2[k] * (1.0 - act[k] * act[k]);
                grad[b1_at + k] += dz;
                let row = &mut grad[k * d..(k + 1) * d];
                for (g, v) in row.iter_mut().zip(x) {
                    *g += dz * v;
                }
            }
        }
        grad
    }
}

/// Mean pixel probability over a cell.
pub fn cell_probability(p: &LabelMap, cell: &CellId) -> f64 {
    crate::hierarchy::cell_mean(p.values(), p.cols(), cell)
}

/// Cross-entropy of a predicted probability against a soft target.
pub fn soft_bce(y_hat: f64, p: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    -(y_hat * p.ln() + (1.0 - y_hat) * (1.0 - p).ln())
}

/// Multi-instance loss summed over frontier leaves.
pub fn mil_loss(p: &LabelMap, labels: &[f64], frontier: &Frontier) -> Result<f64> {
    if labels.len() != frontier.len() {
        return Err(Error::Length {
            expected: frontier.len(),
            got: labels.len(),
        });
    }
    Ok(frontier
        .leaves()
        .iter()
        .zip(labels)
        .map(|(cell, &y)| soft_bce(y, cell_probability(p, cell)))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs without a new best loss before the learning rate is halved.
    pub plateau_patience: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            plateau_patience: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean per-cell loss before each update.
    pub losses: Vec<f64>,
    pub best_loss: f64,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{e},{l}\n"));
        }
        out
    }
}

/// Cells with soft targets, flattened for repeated loss evaluation.
struct Bags {
    pixels: Vec<usize>,
    /// `bounds[i]..bounds[i + 1]` indexes `pixels` for bag `i`.
    bounds: Vec<usize>,
    targets: Vec<f64>,
}

impl Bags {
    fn new(cells: &[(CellId, f64)], cols: usize) -> Self {
        let mut pixels = Vec::new();
        let mut bounds = vec![0];
        let mut targets = Vec::with_capacity(cells.len());
        for (cell, y) in cells {
            pixels.extend(cell.pixels(cols));
            bounds.push(pixels.len());
            targets.push(*y);
        }
        Self { pixels, bounds, targets }
    }

    /// Mean loss over bags and the upstream gradient per gathered pixel.
    fn loss_and_upstream(&self, probs: &[f64]) -> (f64, Vec<f64>) {
        let n = self.targets.len() as f64;
        let mut loss = 0.0;
        let mut upstream = vec![0.0; probs.len()];
        for (i, &y) in self.targets.iter().enumerate() {
            let range = self.bounds[i]..self.bounds[i + 1];
            let size = range.len() as f64;
            let cell_p = probs[range.clone()].iter().sum::<f64>() / size;
            loss += soft_bce(y, cell_p);
            let p = cell_p.clamp(EPS, 1.0 - EPS);
            let d_cell = if cell_p == p { (-y / p + (1.0 - y) / (1.0 - p)) / n } else { 0.0 };
            for u in &mut upstream[range] {
                *u = d_cell / size;
            }
        }
        (loss / n, upstream)
    }
}

/// Gradient of the mean per-cell loss with respect to the parameters.
pub fn cell_loss_gradient<C: PixelClassifier>(
    classifier: &C,
    input: &C::Input,
    cells: &[(CellId, f64)],
    cols: usize,
) -> (f64, Vec<f64>) {
    let bags = Bags::new(cells, cols);
    let probs = classifier.forward(input, &bags.pixels);
    let (loss, upstream) = bags.loss_and_upstream(&probs);
    (loss, classifier.backward(input, &bags.pixels, &upstream))
}

/// Adam on the mean per-cell loss. Keeps the parameters with the lowest
/// recorded loss and halves the step after `plateau_patience` epochs
/// without improvement.
pub fn train_cells<C: PixelClassifier>(
    classifier: &mut C,
    input: &C::Input,
    cells: &[(CellId, f64)],
    cols: usize,
    params: &TrainParams,
) -> Result<TrainReport> {
    if params.epochs == 0 || cells.is_empty() {
        return Ok(TrainReport::default());
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning rate {}", params.learning_rate)));
    }
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const ADAM_EPS: f64 = 1e-8;

    let bags = Bags::new(cells, cols);
    let n = classifier.params().len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut lr = params.learning_rate;
    let mut best = (f64::INFINITY, classifier.params().to_vec());
    let mut since_best = 0;
    let mut losses = Vec::with_capacity(params.epochs + 1);

    for epoch in 0..=params.epochs {
        let probs = classifier.forward(input, &bags.pixels);
        let (loss, upstream) = bags.loss_and_upstream(&probs);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, classifier.params().to_vec());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.plateau_patience {
                lr *= 0.5;
                since_best = 0;
            }
        }
        if epoch == params.epochs {
            break;
        }
        let grad = classifier.backward(input, &bags.pixels, &upstream);
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for (i, theta) in classifier.params_mut().iter_mut().enumerate() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            *theta -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
        }
    }

    classifier.params_mut().copy_from_slice(&best.1);
    Ok(TrainReport {
        losses,
        best_loss: best.0,
    })
}

/// Trains on soft labels, one per frontier leaf.
pub fn train<C: PixelClassifier>(
    classifier: &mut C,
    features: &FeatureStack,
    labels: &[f64],
    frontier: &Frontier,
    params: &TrainParams,
) -> Result<TrainReport> {
    if labels.len() != frontier.len() {
        return Err(Error::Length {
            expected: frontier.len(),
            got: labels.len(),
        });
    }
    let input = classifier.prepare(features)?;
    let cells: Vec<(CellId, f64)> = frontier.leaves().iter().copied().zip(labels.iter().copied()).collect();
    train_cells(classifier, &input, &cells, features.cols(), params)
}

/// Trains on the labelled pixels alone with crisp targets.
pub fn train_sparse_baseline<C: PixelClassifier>(
    classifier: &mut C,
    features: &FeatureStack,
    sparse: &SparseLabels,
    params: &TrainParams,
) -> Result<TrainReport> {
    if sparse.is_empty() {
        return Err(Error::Contract("baseline needs at least one label".into()));
    }
    let input = classifier.prepare(features)?;
    let cells = sparse_cells(sparse);
    train_cells(classifier, &input, &cells, features.cols(), params)
}

pub(crate) fn sparse_cells(sparse: &SparseLabels) -> Vec<(CellId, f64)> {
    sparse
        .entries()
        .iter()
        .map(|e| {
            let cell = CellId {
                row0: e.row,
                col0: e.col,
                level: 0,
                height: 1,
                width: 1,
            };
            (cell, if e.flood { 1.0 } else { 0.0 })
        })
        .collect()
}

pub fn checkpoint_bytes(theta: &[f64]) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for &t in theta {
        out.extend_from_slice(&(t as f32).to_le_bytes());
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Vec<f64>> {
    let body = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::Checkpoint("missing SKIHL-MODEL 1 header".into()))?;
    if body.len() < 8 {
        return Err(Error::Checkpoint("missing parameter count".into()));
    }
    let (count, payload) = body.split_at(8);
    let count = u64::from_le_bytes(count.try_into().expect("8 bytes")) as usize;
    if payload.len() != count * 4 {
        return Err(Error::Checkpoint(format!(
            "expected {count} parameters, found {} bytes",
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn save_checkpoint(theta: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(theta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    parse_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
