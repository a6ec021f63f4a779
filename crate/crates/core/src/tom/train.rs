//! Mini-batch Adam training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;

use super::{BeliefMatrix, ModelParams, TomError, TrainingSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global L2 norm clip on the batch gradient; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            batch_size: 32,
            max_epochs: 50,
            patience: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: None,
            seed: 0,
        }
    }
}

/// One line of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation loss.
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Mean-over-samples loss and gradient of a batch. Per-sample gradients are
/// computed in parallel and reduced in batch order, so the result does not
/// depend on thread scheduling.
pub fn batch_loss_and_grad(params: &ModelParams, batch: &[&TrainingSample]) -> Result<(f64, Vec<f64>), TomError> {
    let per_sample: Vec<(f64, Vec<f64>)> =
        batch.par_iter().map(|s| params.loss_and_grad(s)).collect::<Result<_, _>>()?;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = vec![0.0; params.num_params()];
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += x * scale;
        }
    }
    Ok((loss * scale, grad))
}

/// Mean per-sample loss over a dataset.
pub fn mean_loss(params: &ModelParams, samples: &[TrainingSample]) -> Result<f64, TomError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<f64> = samples.par_iter().map(|s| params.sample_loss(s)).collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

pub fn train(
    init: ModelParams,
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome, TomError> {
    if train_set.is_empty() {
        return Err(TomError::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(TomError::EmptyDataset("validation set"));
    }
    if cfg.batch_size == 0 {
        return Err(TomError::InvalidConfig("batch_size must be >= 1".into()));
    }
    let mut params = init;
    let mut adam = Adam::new(params.num_params());
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best_val = mean_loss(&params, val_set)?;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grad) = batch_loss_and_grad(&params, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TomError::NonFiniteLoss { epoch, batch: b });
            }
            if let Some(max_norm) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(params.as_mut_slice(), &grad, cfg);
            params.round_to_f32();
        }
        let val_loss = mean_loss(&params, val_set)?;
        if !val_loss.is_finite() {
            return Err(TomError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let stats = EpochStats { epoch, train_loss: epoch_loss / train_set.len() as f64, val_loss };
        on_epoch(&stats);
        history.push(stats);
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("early stop at epoch {epoch}: validation loss rose for {stale} epoch(s)");
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best_params, history, best_epoch, best_val_loss: best_val })
}

/// Held-out quality of a model against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean summed cross-entropy per supervised position.
    pub ce_per_target: f64,
    /// Mean summed entropy of the ground-truth matrices per position: the
    /// floor of `ce_per_target`.
    pub gt_entropy_per_target: f64,
    /// Fraction of rows with a non-empty suspicion set whose predicted
    /// argmax (over other players) lies in that set.
    pub argmax_agreement: f64,
    pub suspect_rows: usize,
    pub targets: usize,
}

fn row_entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&g| g > 0.0).map(|&g| -g * g.ln()).sum()
}

/// Row `i` names a suspicion set when it is not uniform over all columns.
fn suspect_set(gt: &BeliefMatrix, i: usize) -> Option<Vec<usize>> {
    let row = gt.row(i);
    let n = row.len();
    let uniform = row.iter().all(|&g| (g - 1.0 / n as f64).abs() < 1e-9);
    (!uniform).then(|| (0..n).filter(|&j| row[j] > 0.0).collect())
}

pub fn evaluate(params: &ModelParams, samples: &[TrainingSample]) -> Result<EvalReport, TomError> {
    let per_sample: Vec<(f64, f64, usize, usize, usize)> = samples
        .par_iter()
        .map(|s| -> Result<_, TomError> {
            let outputs = params.forward(&s.tokens)?;
            let (mut ce, mut ent, mut hits, mut rows) = (0.0, 0.0, 0, 0);
            for t in &s.targets {
                let pred = &outputs[t.index];
                ce += super::cross_entropy(pred, &t.belief);
                for i in 0..pred.num_players() {
                    ent += row_entropy(t.belief.row(i));
                    if let Some(set) = suspect_set(&t.belief, i) {
                        rows += 1;
                        if set.contains(&pred.top_suspect(i).index()) {
                            hits += 1;
                        }
                    }
                }
            }
            Ok((ce, ent, hits, rows, s.targets.len()))
        })
        .collect::<Result<_, _>>()?;
    let (mut ce, mut ent, mut hits, mut rows, mut targets) = (0.0, 0.0, 0, 0, 0);
    for (c, e, h, r, t) in per_sample {
        ce += c;
        ent += e;
        hits += h;
        rows += r;
        targets += t;
    }
    let denom = targets.max(1) as f64;
    Ok(EvalReport {
        ce_per_target: ce / denom,
        gt_entropy_per_target: ent / denom,
        argmax_agreement: if rows == 0 { 1.0 } else { hits as f64 / rows as f64 },
        suspect_rows: rows,
        targets,
    })
}
