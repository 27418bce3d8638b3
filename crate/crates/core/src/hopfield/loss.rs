//! Training objective and its analytic gradient.
//!
//! `total = mse + lambda_intra * intra + lambda_inter * inter` where
//!
//! * `mse` is the mean over all `N * C` entries of `(scores - onehot)^2`
//! * `intra` is, averaged over banks, the mean squared distance between the
//!   L2-normalized class rows of a bank (zero when `C = 1`)
//! * `inter` is, averaged over classes, the mean squared cosine between the
//!   same class's rows in two different banks (zero when `m = 1`)

use serde::{Deserialize, Serialize};

use super::{accumulate_mean, HopfieldHead, Hyperparams};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub intra: f64,
    pub inter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankGradients {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub y: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub banks: Vec<BankGradients>,
}

impl Gradients {
    /// Flattened in bank order, `W_Q`, `W_K`, `Y` within each bank.
    pub fn flatten(&self) -> Vec<f64> {
        self.banks
            .iter()
            .flat_map(|b| {
                b.w_q
                    .as_slice()
                    .iter()
                    .chain(b.w_k.as_slice())
                    .chain(b.y.as_slice())
                    .copied()
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.banks
            .iter()
            .all(|b| b.w_q.is_finite() && b.w_k.is_finite() && b.y.is_finite())
    }
}

struct BankForward {
    q: Matrix,
    k: Matrix,
    scores: Matrix,
}

fn check_batch(head: &HopfieldHead, queries: &Matrix, labels: &[usize]) -> Result<()> {
    if queries.rows() == 0 || labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if queries.rows() != labels.len() {
        return Err(Error::Shape {
            expected: queries.rows(),
            got: labels.len(),
        });
    }
    if queries.cols() != head.d {
        return Err(Error::Shape {
            expected: head.d,
            got: queries.cols(),
        });
    }
    let c = head.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::UnknownClass(bad.to_string()));
    }
    Ok(())
}

fn forward_cached(head: &HopfieldHead, queries: &Matrix) -> (Vec<BankForward>, Matrix) {
    let mut mean = Matrix::zeros(queries.rows(), head.num_classes());
    let banks = head
        .banks
        .iter()
        .map(|bank| {
            let q = queries.matmul(&bank.w_q);
            let k = bank.y.matmul(&bank.w_k);
            let mut scores = q.matmul_t(&k);
            scores.scale(head.beta);
            for i in 0..scores.rows() {
                softmax_in_place(scores.row_mut(i));
            }
            BankForward { q, k, scores }
        })
        .collect::<Vec<_>>();
    for (b, bank) in banks.iter().enumerate() {
        accumulate_mean(&mut mean, &bank.scores, b);
    }
    (banks, mean)
}

fn mse_term(scores: &Matrix, labels: &[usize]) -> f64 {
    let (n, c) = (scores.rows(), scores.cols());
    let mut sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        for (j, &s) in scores.row(i).iter().enumerate() {
            let t = if j == label { 1.0 } else { 0.0 };
            sum += (s - t) * (s - t);
        }
    }
    sum / (n * c) as f64
}

fn unit(v: &[f64]) -> (Vec<f64>, f64) {
    let n = norm(v);
    if n == 0.0 {
        (vec![0.0; v.len()], 0.0)
    } else {
        (v.iter().map(|x| x / n).collect(), n)
    }
}

fn intra_term(head: &HopfieldHead) -> f64 {
    let c = head.num_classes();
    if c < 2 {
        return 0.0;
    }
    let pairs = (c * (c - 1) / 2) as f64;
    let per_bank: f64 = head
        .banks
        .iter()
        .map(|bank| {
            let units: Vec<Vec<f64>> = (0..c).map(|i| unit(bank.y.row(i)).0).collect();
            let mut sum = 0.0;
            for a in 0..c {
                for b in a + 1..c {
                    sum += units[a].iter().zip(&units[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                }
            }
            sum / pairs
        })
        .sum();
    per_bank / head.m as f64
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot(u, v) / (nu * nv)
    }
}

fn inter_term(head: &HopfieldHead) -> f64 {
    let m = head.m;
    if m < 2 {
        return 0.0;
    }
    let c = head.num_classes();
    let pairs = (m * (m - 1) / 2) as f64;
    let mut total = 0.0;
    for class in 0..c {
        let mut sum = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                sum += cosine(head.banks[a].y.row(class), head.banks[b].y.row(class)).powi(2);
            }
        }
        total += sum / pairs;
    }
    total / c as f64
}

pub fn loss(head: &HopfieldHead, queries: &Matrix, labels: &[usize], hp: &Hyperparams) -> Result<LossBreakdown> {
    check_batch(head, queries, labels)?;
    let (_, scores) = forward_cached(head, queries);
    let mse = mse_term(&scores, labels);
    let intra = intra_term(head);
    let inter = inter_term(head);
    Ok(LossBreakdown {
        total: mse + hp.lambda_intra * intra + hp.lambda_inter * inter,
        mse,
        intra,
        inter,
    })
}

/// Analytic gradient of [`loss`]'s total with respect to every bank parameter.
pub fn gradients(head: &HopfieldHead, queries: &Matrix, labels: &[usize], hp: &Hyperparams) -> Result<Gradients> {
    check_batch(head, queries, labels)?;
    let (n, c, m) = (queries.rows(), head.num_classes(), head.m);
    let (cache, mean) = forward_cached(head, queries);

    // d mse / d bank scores, identical for every bank.
    let scale = 2.0 / (n * c) as f64 / m as f64;
    let d_scores = Matrix::from_fn(n, c, |i, j| {
        let t = if j == labels[i] { 1.0 } else { 0.0 };
        scale * (mean[(i, j)] - t)
    });

    let mut grads: Vec<BankGradients> = head
        .banks
        .iter()
        .zip(&cache)
        .map(|(bank, fwd)| {
            let mut d_logits = Matrix::zeros(n, c);
            for i in 0..n {
                let s = fwd.scores.row(i);
                let g = d_scores.row(i);
                let inner = dot(s, g);
                for (j, out) in d_logits.row_mut(i).iter_mut().enumerate() {
                    *out = head.beta * s[j] * (g[j] - inner);
                }
            }
            let d_q = d_logits.matmul(&fwd.k);
            let d_k = d_logits.t_matmul(&fwd.q);
            BankGradients {
                w_q: queries.t_matmul(&d_q),
                w_k: bank.y.t_matmul(&d_k),
                y: d_k.matmul_t(&bank.w_k),
            }
        })
        .collect();

    if hp.lambda_intra != 0.0 && c >= 2 {
        let weight = hp.lambda_intra / (m * c * (c - 1) / 2) as f64;
        for (bank, g) in head.banks.iter().zip(grads.iter_mut()) {
            let units: Vec<(Vec<f64>, f64)> = (0..c).map(|i| unit(bank.y.row(i))).collect();
            for a in 0..c {
                let (ua, na) = &units[a];
                if *na == 0.0 {
                    continue;
                }
                // d/du_a of sum over pairs containing a of |u_a - u_b|^2
                let mut du = vec![0.0; head.d];
                for (b, (ub, _)) in units.iter().enumerate() {
                    if b != a {
                        for ((d, x), y) in du.iter_mut().zip(ua).zip(ub) {
                            *d += 2.0 * (x - y);
                        }
                    }
                }
                let along = dot(ua, &du);
                for ((out, d), u) in g.y.row_mut(a).iter_mut().zip(&du).zip(ua) {
                    *out += weight * (d - u * along) / na;
                }
            }
        }
    }

    if hp.lambda_inter != 0.0 && m >= 2 {
        let weight = hp.lambda_inter / (c * m * (m - 1) / 2) as f64;
        for class in 0..c {
            let units: Vec<(Vec<f64>, f64)> = head.banks.iter().map(|b| unit(b.y.row(class))).collect();
            for a in 0..m {
                let (ua, na) = &units[a];
                if *na == 0.0 {
                    continue;
                }
                let mut acc = vec![0.0; head.d];
                for (b, (ub, nb)) in units.iter().enumerate() {
                    if b == a || *nb == 0.0 {
                        continue;
                    }
                    let cos = dot(ua, ub);
                    // d cos^2 / d y_a = 2 cos (u_b - cos u_a) / |y_a|
                    for ((o, x), y) in acc.iter_mut().zip(ua).zip(ub) {
                        *o += 2.0 * cos * (y - cos * x) / na;
                    }
                }
                for (out, v) in grads[a].y.row_mut(class).iter_mut().zip(&acc) {
                    *out += weight * v;
                }
            }
        }
    }

    Ok(Gradients { banks: grads })
}
