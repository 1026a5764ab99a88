use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Model};
use crate::binarize::LATENT_WEIGHT_BOUND;
use crate::error::{LabError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs (0-based) at which the learning rate is multiplied by `lr_decay_factor`.
    #[serde(default)]
    pub lr_decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_decay_factor() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_decay_epochs: vec![20],
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(LabError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LabError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LabError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(LabError::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }

    /// Piecewise-constant schedule: one decay per milestone already reached.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.lr_decay_factor.powi(hits as i32)
    }

    /// Decay milestones placed at the same fractions of the budget as a reference schedule.
    pub fn scaled_milestones(epochs: usize, fractions: &[f64]) -> Vec<usize> {
        fractions
            .iter()
            .map(|f| ((epochs as f64) * f).round() as usize)
            .filter(|&e| e > 0 && e < epochs)
            .collect()
    }
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `buf ← μ·buf + (g + wd·w)`, `w ← w − lr·buf`.
#[derive(Debug, Clone)]
pub struct Sgd {
    buffers: Gradients,
}

impl Sgd {
    pub fn new(model: &Model) -> Self {
        Self {
            buffers: Gradients::zeros_like(model),
        }
    }

    pub fn buffers(&self) -> &Gradients {
        &self.buffers
    }

    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &Gradients,
        cfg: &TrainConfig,
        epoch: usize,
    ) -> Result<()> {
        sgd_step(model, grads, cfg, epoch, &mut self.buffers)
    }
}

pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    cfg: &TrainConfig,
    epoch: usize,
    momentum_buffers: &mut Gradients,
) -> Result<()> {
    if grads.layers.len() != model.layers().len() {
        return Err(LabError::Shape("gradient layer count does not match model".into()));
    }
    if !grads.is_finite() {
        return Err(LabError::Divergence("non-finite gradient".into()));
    }
    let lr = cfg.lr_at(epoch);
    let mu = cfg.momentum;
    let wd = cfg.weight_decay;
    let binary: Vec<bool> = model.spec().layers.iter().map(|l| l.binary_weights).collect();
    for (l, ((p, g), b)) in model
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(momentum_buffers.layers.iter_mut())
        .enumerate()
    {
        if p.weights.as_slice().len() != g.weights.as_slice().len() || p.bias.len() != g.bias.len()
        {
            return Err(LabError::Shape(format!("layer {l} gradient shape mismatch")));
        }
        let update = |w: &mut f64, g: f64, buf: &mut f64| {
            *buf = mu * *buf + g + wd * *w;
            *w -= lr * *buf;
        };
        for ((w, &gv), buf) in p
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(g.weights.as_slice())
            .zip(b.weights.as_mut_slice())
        {
            update(w, gv, buf);
        }
        for ((w, &gv), buf) in p.bias.iter_mut().zip(&g.bias).zip(&mut b.bias) {
            update(w, gv, buf);
        }
        if binary[l] {
            p.weights
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = w.clamp(-LATENT_WEIGHT_BOUND, LATENT_WEIGHT_BOUND));
        }
    }
    if !model.is_finite() {
        return Err(LabError::Divergence("parameters became non-finite".into()));
    }
    Ok(())
}

/// A per-example training objective evaluated on a mini-batch of logits.
pub trait Objective {
    /// Writes each example's logit gradient into `grad` and returns the summed loss.
    /// `idx` are the dataset indices of the batch rows.
    fn loss_grad(&mut self, idx: &[usize], logits: &Matrix, grad: &mut Matrix) -> f64;
}

/// Cross-entropy against fixed per-example target distributions.
pub struct TargetCrossEntropy<'a> {
    pub targets: &'a Matrix,
    probs: Vec<f64>,
}

impl<'a> TargetCrossEntropy<'a> {
    pub fn new(targets: &'a Matrix) -> Self {
        Self {
            targets,
            probs: vec![0.0; targets.cols()],
        }
    }
}

impl Objective for TargetCrossEntropy<'_> {
    fn loss_grad(&mut self, idx: &[usize], logits: &Matrix, grad: &mut Matrix) -> f64 {
        let mut total = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let t = self.targets.row(i);
            crate::labels::softmax_into(logits.row(r), 1.0, &mut self.probs);
            total += crate::labels::cross_entropy_slice(&self.probs, t);
            for ((g, p), y) in grad.row_mut(r).iter_mut().zip(&self.probs).zip(t) {
                *g = p - y;
            }
        }
        total
    }
}

/// Outcome of one epoch handed to the training callback.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example loss over the epoch's mini-batches.
    pub train_loss: f64,
}

/// Mini-batch SGD over `features`, reshuffled each epoch from `cfg.seed`.
pub fn fit<O, F>(
    model: &mut Model,
    features: &Matrix,
    objective: &mut O,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    O: Objective,
    F: FnMut(&EpochStats, &Model) -> Result<()>,
{
    cfg.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(LabError::Data("cannot train on an empty dataset".into()));
    }
    let k = model.spec().num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = Sgd::new(model);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = features.select_rows(idx);
            let record = model.forward(&batch)?;
            let mut grad = Matrix::zeros(idx.len(), k);
            total += objective.loss_grad(idx, record.logits(), &mut grad);
            let grads = model.backward(&record, &grad)?;
            opt.step(model, &grads, cfg, epoch)?;
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / n as f64,
        };
        if !stats.train_loss.is_finite() {
            return Err(LabError::Divergence(format!(
                "training loss became non-finite at epoch {epoch}"
            )));
        }
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}
