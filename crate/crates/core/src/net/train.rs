//! Mini-batch ADAM training.

use ndarray::{s, Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{layer_sizes, loss, Dense, Gradients, LossKind, MlpModel, DEFAULT_HIDDEN};
use crate::error::{Error, Result};

/// Keeps the shuffle stream independent of the weight initialization.
const SHUFFLE_STREAM: u64 = 0x5EED_5EED;
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 32,
            learning_rate: 1e-3,
            loss: LossKind::Mse,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::config("ADAM betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("ADAM epsilon must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates of the ADAM optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(model: &MlpModel, cfg: &TrainConfig) -> Self {
        let zeros = MlpModel::zeros(&model.layer_sizes()).expect("sizes of an existing model").layers;
        Self {
            step: 0,
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn apply(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let corr1 = 1.0 - self.beta1.powi(t);
        let corr2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, m), v), g) in model.layers.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grads) {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
    }

    pub fn matches(&self, model: &MlpModel) -> bool {
        let same = |a: &[Dense]| {
            a.len() == model.layers.len()
                && a.iter()
                    .zip(&model.layers)
                    .all(|(x, y)| x.weights.dim() == y.weights.dim() && x.bias.len() == y.bias.len())
        };
        same(&self.m) && same(&self.v)
    }
}

/// Per-epoch mean losses. Training loss is the sample-weighted mean of
/// the mini-batch losses seen during the epoch; validation loss is
/// measured after the epoch and is empty when no validation set is given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub adam: AdamState,
    pub history: TrainHistory,
}

/// Feature rows and matching label rows.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub features: ArrayView2<'a, f64>,
    pub labels: ArrayView2<'a, f64>,
}

impl<'a> Split<'a> {
    pub fn new(features: ArrayView2<'a, f64>, labels: ArrayView2<'a, f64>) -> Result<Self> {
        if features.nrows() != labels.nrows() {
            return Err(Error::Dimension {
                context: "split: label rows",
                expected: features.nrows(),
                found: labels.nrows(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean loss of `model` over a whole split, evaluated in chunks.
pub fn evaluate_loss(model: &MlpModel, data: Split<'_>, kind: LossKind) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let pred = model.forward_batch(data.features.slice(s![start..end, ..]))?;
        total += loss(pred.view(), data.labels.slice(s![start..end, ..]), kind)? * (end - start) as f64;
        start = end;
    }
    Ok(total / data.len() as f64)
}

/// Trains a fresh model with layer sizes `[features, hidden..., outputs]`.
pub fn train(train_set: Split<'_>, val_set: Option<Split<'_>>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let sizes = layer_sizes(train_set.features.ncols(), &cfg.hidden, train_set.labels.ncols());
    let model = MlpModel::new(&sizes, cfg.seed)?;
    let adam = AdamState::new(&model, cfg);
    resume(model, adam, train_set, val_set, cfg)
}

/// Continues training from an existing model and optimizer state.
pub fn resume(
    mut model: MlpModel,
    mut adam: AdamState,
    train_set: Split<'_>,
    val_set: Option<Split<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = train_set.len();
    if n == 0 {
        return Err(Error::Validation("training set is empty".into()));
    }
    let widths = std::iter::once((train_set.features.ncols(), train_set.labels.ncols()))
        .chain(val_set.map(|v| (v.features.ncols(), v.labels.ncols())));
    for (x_cols, y_cols) in widths {
        if x_cols != model.input_size() || y_cols != model.output_size() {
            return Err(Error::Dimension {
                context: "train: sample width",
                expected: model.input_size() + model.output_size(),
                found: x_cols + y_cols,
            });
        }
    }
    if !adam.matches(&model) {
        return Err(Error::Validation("optimizer state does not match the model".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let width = train_set.features.ncols();
    let outputs = train_set.labels.ncols();
    let mut xb = Array2::zeros((cfg.batch_size.min(n), width));
    let mut yb = Array2::zeros((cfg.batch_size.min(n), outputs));

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            if xb.nrows() != b {
                xb = Array2::zeros((b, width));
                yb = Array2::zeros((b, outputs));
            }
            for (row, &idx) in batch.iter().enumerate() {
                xb.row_mut(row).assign(&train_set.features.row(idx));
                yb.row_mut(row).assign(&train_set.labels.row(idx));
            }
            let (value, grads) = model.backward(xb.view(), yb.view(), cfg.loss)?;
            adam.apply(&mut model, &grads);
            epoch_total += value * b as f64;
        }
        history.train_loss.push(epoch_total / n as f64);
        if let Some(val) = val_set.filter(|v| !v.is_empty()) {
            history.val_loss.push(evaluate_loss(&model, val, cfg.loss)?);
        }
        if !model.is_finite() {
            return Err(Error::Validation("training diverged to non-finite parameters".into()));
        }
    }
    Ok(TrainOutcome { model, adam, history })
}

/// Predictions for every row of `features`, computed in chunks.
pub fn predict(model: &MlpModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((features.nrows(), model.output_size()));
    let mut start = 0;
    while start < features.nrows() {
        let end = (start + EVAL_CHUNK).min(features.nrows());
        let pred = model.forward_batch(features.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&pred);
        start = end;
    }
    Ok(out)
}
