#![allow(dead_code)]

use std::collections::BTreeMap;

use labelprop::hopfield::{gradients, loss, Bank, HopfieldHead, Hyperparams};
use labelprop::linalg::Matrix;
use labelprop::rng::StreamRng;
use labelprop::store::Split;
use labelprop::synth::SyntheticConfig;

pub const SPACES: [&str; 3] = ["space_a", "space_b", "space_c"];

/// Ten classes, three spaces, two confusable pairs per space and no pair shared.
pub fn confusable_config(seed: u64, blend: f64) -> SyntheticConfig {
    SyntheticConfig {
        seed,
        num_classes: 10,
        dim: 32,
        spaces: SPACES.iter().map(|s| s.to_string()).collect(),
        samples_per_class_per_split: BTreeMap::from([
            (Split::Representative, 5),
            (Split::Train, 100),
            (Split::Validation, 50),
        ]),
        cluster_sigma: 1.0,
        center_scale: 1.0,
        confusion_pairs: BTreeMap::from([
            ("space_a".to_string(), vec![(0, 1), (2, 3)]),
            ("space_b".to_string(), vec![(4, 5), (6, 7)]),
            ("space_c".to_string(), vec![(8, 9), (0, 2)]),
        ]),
        confusion_blend: blend,
    }
}

pub fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.normal())
}

pub fn random_head(rng: &mut StreamRng, d: usize, p: usize, c: usize, m: usize, beta: f64) -> HopfieldHead {
    let sd = (1.0 / d as f64).sqrt();
    let banks = (0..m)
        .map(|_| Bank {
            w_q: gaussian(rng, d, p, sd),
            w_k: gaussian(rng, d, p, sd),
            y: gaussian(rng, c, d, 1.0),
        })
        .collect();
    HopfieldHead::from_banks("test", beta, banks).unwrap()
}

/// Denominator floor for relative gradient error. Central differences at
/// h = 1e-5 on an O(1) loss carry ~1e-11 of rounding noise, so relative error
/// is meaningless for coordinates much smaller than this.
pub const GRAD_FLOOR: f64 = 1e-6;

pub struct FdCheck {
    /// max |a - n| / max(|a|, |n|, GRAD_FLOOR)
    pub worst_relative: f64,
    pub worst_absolute: f64,
    /// Coordinates whose magnitude fell under the floor.
    pub floored: usize,
    pub coordinates: usize,
}

/// Compares analytic gradients with central differences of the loss, in
/// W_Q, W_K, Y order per bank.
pub fn finite_difference_error(head: &HopfieldHead, x: &Matrix, labels: &[usize], hp: &Hyperparams, h: f64) -> FdCheck {
    let analytic = gradients(head, x, labels, hp).unwrap().flatten();
    let mut probe = head.clone();
    let mut out = FdCheck {
        worst_relative: 0.0,
        worst_absolute: 0.0,
        floored: 0,
        coordinates: 0,
    };
    let mut k = 0;
    for b in 0..head.banks.len() {
        for which in 0..3 {
            let len = param(&mut probe, b, which).as_slice().len();
            for i in 0..len {
                let orig = param(&mut probe, b, which).as_slice()[i];
                param(&mut probe, b, which).as_mut_slice()[i] = orig + h;
                let up = loss(&probe, x, labels, hp).unwrap().total;
                param(&mut probe, b, which).as_mut_slice()[i] = orig - h;
                let down = loss(&probe, x, labels, hp).unwrap().total;
                param(&mut probe, b, which).as_mut_slice()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[k];
                let scale = a.abs().max(numeric.abs());
                out.floored += usize::from(scale < GRAD_FLOOR);
                out.worst_absolute = out.worst_absolute.max((a - numeric).abs());
                out.worst_relative = out.worst_relative.max((a - numeric).abs() / scale.max(GRAD_FLOOR));
                k += 1;
            }
        }
    }
    assert_eq!(k, analytic.len());
    out.coordinates = k;
    out
}

fn param(head: &mut HopfieldHead, bank: usize, which: usize) -> &mut Matrix {
    let b = &mut head.banks[bank];
    match which {
        0 => &mut b.w_q,
        1 => &mut b.w_k,
        _ => &mut b.y,
    }
}

/// Average precision by direct rank counting: an item's rank is one plus the
/// number of items ahead of it (higher score, or equal score and earlier index).
pub fn ap_oracle(items: &[(f64, bool)]) -> Option<f64> {
    let rank = |i: usize| {
        1 + items
            .iter()
            .enumerate()
            .filter(|&(j, &(s, _))| s > items[i].0 || (s == items[i].0 && j < i))
            .count()
    };
    let mut at_ranks: Vec<(usize, f64)> = Vec::new();
    for i in 0..items.len() {
        if items[i].1 {
            let r = rank(i);
            let relevant_within = (0..items.len()).filter(|&j| items[j].1 && rank(j) <= r).count();
            at_ranks.push((r, relevant_within as f64 / r as f64));
        }
    }
    if at_ranks.is_empty() {
        return None;
    }
    at_ranks.sort_by_key(|&(r, _)| r);
    let n = at_ranks.len() as f64;
    Some(at_ranks.iter().map(|&(_, p)| p).sum::<f64>() / n)
}
