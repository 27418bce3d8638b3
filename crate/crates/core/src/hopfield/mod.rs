//! Banked Hopfield memory used as a per-space classifier.
//!
//! Each bank holds query/key projections and one representative row per
//! class. A query `r` is scored against the class rows with
//! `softmax(beta * (r W_Q) (Y W_K)^T)` and the final scores are the mean of the
//! per-bank distributions.

mod loss;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, softmax_in_place, Matrix};
use crate::rng::{purpose, StreamRng};
use crate::scores::ScoreVector;
use crate::store::{EmbeddingStore, Split};

pub use loss::{gradients, loss, BankGradients, Gradients, LossBreakdown};
pub use train::{train_head, EpochStats, Hyperparams, Optimizer, TrainReport};

pub const HEAD_FORMAT: &str = "hopfield-head/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    /// `d x p`
    #[serde(rename = "W_Q")]
    pub w_q: Matrix,
    /// `d x p`
    #[serde(rename = "W_K")]
    pub w_k: Matrix,
    /// `C x d`, one representative per class in registry order.
    #[serde(rename = "Y")]
    pub y: Matrix,
}

impl Bank {
    /// Row-softmaxed scores of this bank alone, `N x C`.
    pub fn scores(&self, queries: &Matrix, beta: f64) -> Matrix {
        let q = queries.matmul(&self.w_q);
        let k = self.y.matmul(&self.w_k);
        let mut logits = q.matmul_t(&k);
        logits.scale(beta);
        for i in 0..logits.rows() {
            softmax_in_place(logits.row_mut(i));
        }
        logits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfieldHead {
    format: String,
    pub space: String,
    pub d: usize,
    pub p: usize,
    pub m: usize,
    pub beta: f64,
    pub banks: Vec<Bank>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_checksum: Option<String>,
}

/// Initialization settings for [`HopfieldHead::init`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub p: usize,
    pub m: usize,
    /// Inverse temperature; `1/sqrt(p)` when absent.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Per-bank noise on the initial class rows, relative to each class mean's norm.
    pub noise: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            p: 32,
            m: 4,
            beta: None,
            seed: 0,
            noise: 0.01,
        }
    }
}

/// Folds the `index`-th (0-based) term into a running mean. Identical terms
/// leave the mean bit-unchanged, so m equal banks score exactly like one.
pub(crate) fn accumulate_mean(mean: &mut Matrix, term: &Matrix, index: usize) {
    let k = (index + 1) as f64;
    for (m, t) in mean.as_mut_slice().iter_mut().zip(term.as_slice()) {
        *m += (t - *m) / k;
    }
}

impl HopfieldHead {
    /// Assembles a head from explicit banks, checking that shapes agree.
    pub fn from_banks(space: impl Into<String>, beta: f64, banks: Vec<Bank>) -> Result<Self> {
        let first = banks
            .first()
            .ok_or_else(|| Error::Config("a head needs at least one bank".into()))?;
        let (d, p) = (first.w_q.rows(), first.w_q.cols());
        let head = Self {
            format: HEAD_FORMAT.into(),
            space: space.into(),
            d,
            p,
            m: banks.len(),
            beta,
            banks,
            registry_checksum: None,
        };
        head.validate()?;
        Ok(head)
    }

    fn validate(&self) -> Result<()> {
        if self.format != HEAD_FORMAT {
            return Err(Error::Config(format!("unsupported head format `{}`", self.format)));
        }
        if self.m == 0 || self.p == 0 || self.d == 0 || self.banks.len() != self.m {
            return Err(Error::Config("head needs m, p, d >= 1 and m banks".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("beta must be positive".into()));
        }
        let c = self.banks[0].y.rows();
        if c == 0 {
            return Err(Error::Config("head has no classes".into()));
        }
        for b in &self.banks {
            let shapes_ok = (b.w_q.rows(), b.w_q.cols()) == (self.d, self.p)
                && (b.w_k.rows(), b.w_k.cols()) == (self.d, self.p)
                && (b.y.rows(), b.y.cols()) == (c, self.d);
            if !shapes_ok {
                return Err(Error::Config("bank shapes disagree with head".into()));
            }
            if !(b.w_q.is_finite() && b.w_k.is_finite() && b.y.is_finite()) {
                return Err(Error::Config("non-finite head parameter".into()));
            }
        }
        Ok(())
    }

    /// Seeds every bank's class rows from the representative-split class means.
    pub fn init(store: &EmbeddingStore, space: &str, config: &HeadConfig) -> Result<Self> {
        if config.p == 0 || config.m == 0 {
            return Err(Error::Config("p and m must be positive".into()));
        }
        let d = store.space(space)?.dim();
        let num_classes = store.registry().len();
        let mut sums = vec![vec![0.0; d]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for (r, c) in store.labeled_in(space, Split::Representative)? {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(&r.vector) {
                *s += v;
            }
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::MissingClass {
                class_id: c,
                space: space.to_string(),
            });
        }
        let means: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();

        let std = 1.0 / (d as f64).sqrt();
        let banks = (0..config.m)
            .map(|b| {
                let mut rng = StreamRng::new(config.seed, purpose::HEAD_INIT, b as u32);
                let w_q = Matrix::from_fn(d, config.p, |_, _| std * rng.normal());
                let w_k = Matrix::from_fn(d, config.p, |_, _| std * rng.normal());
                let y = Matrix::from_fn(num_classes, d, |c, j| {
                    let noise = rng.normal();
                    if config.noise == 0.0 {
                        means[c][j]
                    } else {
                        means[c][j] + config.noise * norm(&means[c]) * noise
                    }
                });
                Bank { w_q, w_k, y }
            })
            .collect();

        let beta = config.beta.unwrap_or(1.0 / (config.p as f64).sqrt());
        let mut head = Self::from_banks(space, beta, banks)?;
        head.registry_checksum = Some(store.registry().checksum());
        Ok(head)
    }

    pub fn num_classes(&self) -> usize {
        self.banks[0].y.rows()
    }

    /// Mean over banks of the row-softmaxed attention scores, `N x C`.
    pub fn forward_scores(&self, queries: &Matrix) -> Result<Matrix> {
        if queries.cols() != self.d {
            return Err(Error::Shape {
                expected: self.d,
                got: queries.cols(),
            });
        }
        let mut mean = Matrix::zeros(queries.rows(), self.num_classes());
        for (b, bank) in self.banks.iter().enumerate() {
            accumulate_mean(&mut mean, &bank.scores(queries, self.beta), b);
        }
        Ok(mean)
    }

    pub fn predict(&self, query: &[f64]) -> Result<ScoreVector> {
        if query.len() != self.d {
            return Err(Error::Shape {
                expected: self.d,
                got: query.len(),
            });
        }
        let q = Matrix::from_rows(&[query.to_vec()]);
        Ok(ScoreVector(self.forward_scores(&q)?.row(0).to_vec()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let head: Self = serde_json::from_str(s)?;
        head.validate()?;
        Ok(head)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::fsutil::write_text(path, &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn init_head(
    store: &EmbeddingStore,
    space: &str,
    p: usize,
    m: usize,
    beta: Option<f64>,
    seed: u64,
) -> Result<HopfieldHead> {
    HopfieldHead::init(
        store,
        space,
        &HeadConfig {
            p,
            m,
            beta,
            seed,
            ..HeadConfig::default()
        },
    )
}

pub fn forward_scores(head: &HopfieldHead, queries: &Matrix) -> Result<Matrix> {
    head.forward_scores(queries)
}

pub fn predict(head: &HopfieldHead, query: &[f64]) -> Result<ScoreVector> {
    head.predict(query)
}
