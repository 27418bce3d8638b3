use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{gradients, loss, HopfieldHead, LossBreakdown};
use crate::error::{Error, Result};
use crate::linalg::{argmax, Matrix};
use crate::rng::{purpose, StreamRng};
use crate::store::{EmbeddingStore, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    AdamLike { beta1: f64, beta2: f64, epsilon: f64 },
    PlainSgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::AdamLike {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_inter: f64,
    pub lambda_intra: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 20,
            batch_size: 16,
            lambda_inter: 0.01,
            lambda_intra: 0.1,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.batch_size > 0
            && self.lambda_inter >= 0.0
            && self.lambda_intra >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid hyperparameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
}

/// Losses are measured on the whole training split, before training and
/// after every epoch. Wall time is kept out of equality and serialization so
/// reports stay reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub space: String,
    pub initial: EpochStats,
    pub epochs: Vec<EpochStats>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.initial == other.initial && self.epochs == other.epochs
    }
}

impl TrainReport {
    pub fn last(&self) -> &EpochStats {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

struct OptimizerState {
    kind: Optimizer,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, len: usize) -> Self {
        Self {
            kind,
            step: 0,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    fn apply(&mut self, params: &mut [&mut [f64]], grad: &[f64], lr: f64) {
        self.step += 1;
        let mut k = 0;
        match self.kind {
            Optimizer::PlainSgd => {
                for block in params.iter_mut() {
                    for p in block.iter_mut() {
                        *p -= lr * grad[k];
                        k += 1;
                    }
                }
            }
            Optimizer::AdamLike { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for block in params.iter_mut() {
                    for p in block.iter_mut() {
                        let g = grad[k];
                        self.first[k] = beta1 * self.first[k] + (1.0 - beta1) * g;
                        self.second[k] = beta2 * self.second[k] + (1.0 - beta2) * g * g;
                        let m_hat = self.first[k] / c1;
                        let v_hat = self.second[k] / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                        k += 1;
                    }
                }
            }
        }
    }
}

fn param_blocks(head: &mut HopfieldHead) -> Vec<&mut [f64]> {
    head.banks
        .iter_mut()
        .flat_map(|b| [b.w_q.as_mut_slice(), b.w_k.as_mut_slice(), b.y.as_mut_slice()])
        .collect()
}

fn epoch_stats(head: &HopfieldHead, x: &Matrix, y: &[usize], hp: &Hyperparams, epoch: usize) -> Result<EpochStats> {
    let loss = loss(head, x, y, hp)?;
    let scores = head.forward_scores(x)?;
    let correct = (0..x.rows()).filter(|&i| argmax(scores.row(i)) == y[i]).count();
    Ok(EpochStats {
        epoch,
        loss,
        train_accuracy: correct as f64 / x.rows() as f64,
    })
}

/// Mini-batch training on the labeled records of `split` in the head's space.
///
/// Each epoch visits the records in a seeded shuffle drawn from stream
/// `(seed, epoch)`; the final batch of an epoch may be short.
pub fn train_head(
    head: &HopfieldHead,
    store: &EmbeddingStore,
    split: Split,
    hp: &Hyperparams,
) -> Result<(HopfieldHead, TrainReport)> {
    hp.validate()?;
    let started = Instant::now();
    let (rows, labels): (Vec<Vec<f64>>, Vec<usize>) = store
        .labeled_in(&head.space, split)?
        .map(|(r, c)| (r.vector.clone(), c))
        .unzip();
    if rows.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    if rows[0].len() != head.d {
        return Err(Error::Shape {
            expected: head.d,
            got: rows[0].len(),
        });
    }
    let x = Matrix::from_rows(&rows);

    let mut head = head.clone();
    let initial = epoch_stats(&head, &x, &labels, hp, 0)?;
    let num_params: usize = head
        .banks
        .iter()
        .map(|b| b.w_q.as_slice().len() + b.w_k.as_slice().len() + b.y.as_slice().len())
        .sum();
    let mut opt = OptimizerState::new(hp.optimizer, num_params);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut epochs = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        StreamRng::new(hp.seed, purpose::TRAIN_SHUFFLE, epoch as u32).shuffle(&mut order);
        for batch in order.chunks(hp.batch_size) {
            let bx = Matrix::from_fn(batch.len(), head.d, |i, j| x[(batch[i], j)]);
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let grad = gradients(&head, &bx, &by, hp)?.flatten();
            opt.apply(&mut param_blocks(&mut head), &grad, hp.learning_rate);
        }
        let stats = epoch_stats(&head, &x, &labels, hp, epoch)?;
        log::debug!(
            "{} epoch {epoch}: loss {:.6} acc {:.4}",
            head.space,
            stats.loss.total,
            stats.train_accuracy
        );
        epochs.push(stats);
    }

    let report = TrainReport {
        space: head.space.clone(),
        initial,
        epochs,
        wall_time: started.elapsed(),
    };
    Ok((head, report))
}
