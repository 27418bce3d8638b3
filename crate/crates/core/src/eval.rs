//! Crop-level classification metrics.
//!
//! Average precision uses the uninterpolated all-point definition: the mean
//! of precision@k over the ranks `k` that hold a relevant item.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::ScoreVector;
use crate::store::{ClassRegistry, Complexity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub scores: ScoreVector,
    pub predicted: usize,
    pub truth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
}

impl Prediction {
    pub fn new(
        record_id: impl Into<String>,
        scores: ScoreVector,
        truth: usize,
        complexity: Option<Complexity>,
    ) -> Self {
        Self {
            record_id: record_id.into(),
            predicted: scores.predicted(),
            scores,
            truth,
            complexity,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub support: usize,
    pub predicted: usize,
    #[serde(flatten)]
    pub prf: Prf,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub support: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub micro: Prf,
    /// Over classes with at least one ground-truth instance.
    pub macro_avg: Prf,
    pub per_class: BTreeMap<usize, ClassMetrics>,
    /// Mean AP over classes with at least one positive; `None` if there are none.
    pub map: Option<f64>,
    pub zero_support_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub stratified: BTreeMap<Complexity, Metrics>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn average_precision(ranked: &[(f64, bool)]) -> Result<f64> {
    let relevant = ranked.iter().filter(|(_, r)| *r).count();
    if relevant == 0 {
        return Err(Error::NoRelevant);
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    // Stable: equal scores keep input order.
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if ranked[i].1 {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant as f64)
}

fn metrics(preds: &[Prediction], num_classes: usize) -> Metrics {
    let n = preds.len();
    let correct = preds.iter().filter(|p| p.is_correct()).count();
    let mut support = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut tp = vec![0usize; num_classes];
    for p in preds {
        support[p.truth] += 1;
        predicted[p.predicted] += 1;
        if p.is_correct() {
            tp[p.truth] += 1;
        }
    }

    let mut per_class = BTreeMap::new();
    let mut zero_support_classes = Vec::new();
    for c in 0..num_classes {
        let precision = ratio(tp[c], predicted[c]);
        let recall = ratio(tp[c], support[c]);
        let ap = if support[c] > 0 {
            let ranked: Vec<(f64, bool)> = preds.iter().map(|p| (p.scores[c], p.truth == c)).collect();
            Some(average_precision(&ranked).expect("class has a positive"))
        } else {
            zero_support_classes.push(c);
            None
        };
        per_class.insert(
            c,
            ClassMetrics {
                support: support[c],
                predicted: predicted[c],
                prf: Prf {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                },
                ap,
            },
        );
    }

    let supported: Vec<&ClassMetrics> = per_class.values().filter(|m| m.support > 0).collect();
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        supported.iter().map(|m| f(m)).sum::<f64>() / supported.len() as f64
    };
    let aps: Vec<f64> = supported.iter().filter_map(|m| m.ap).collect();

    // Single-label closed set: every miss is one false positive and one false negative.
    let (tp_sum, fp_sum, fn_sum) = (correct, n - correct, n - correct);
    Metrics {
        support: n,
        correct,
        accuracy: ratio(correct, n),
        micro: Prf {
            precision: ratio(tp_sum, tp_sum + fp_sum),
            recall: ratio(tp_sum, tp_sum + fn_sum),
            f1: ratio(2 * tp_sum, 2 * tp_sum + fp_sum + fn_sum),
        },
        macro_avg: Prf {
            precision: mean(&|m| m.prf.precision),
            recall: mean(&|m| m.prf.recall),
            f1: mean(&|m| m.prf.f1),
        },
        per_class,
        map: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
        zero_support_classes,
    }
}

pub fn stratify(preds: &[Prediction]) -> Result<BTreeMap<Complexity, Vec<Prediction>>> {
    let mut out: BTreeMap<Complexity, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        let c = p.complexity.ok_or_else(|| Error::MissingComplexity(p.record_id.clone()))?;
        out.entry(c).or_default().push(p.clone());
    }
    Ok(out)
}

/// Predictions without a complexity tag take their truth class's tag from the registry.
pub fn evaluate(preds: &[Prediction], registry: &ClassRegistry) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let c = registry.len();
    for p in preds {
        if p.truth >= c || p.predicted >= c || p.scores.len() != c {
            return Err(Error::UnknownClass(format!("{} (prediction `{}`)", p.truth, p.record_id)));
        }
    }
    let tagged: Vec<Prediction> = preds
        .iter()
        .map(|p| Prediction {
            complexity: p.complexity.or(registry.complexity(p.truth)),
            ..p.clone()
        })
        .collect();
    let stratified = stratify(&tagged)?
        .into_iter()
        .map(|(k, bucket)| (k, metrics(&bucket, c)))
        .collect();
    Ok(EvalReport {
        overall: metrics(&tagged, c),
        stratified,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Rows of `model | mAP | Accuracy | Precision | Recall | F1-Score` with macro P/R/F1.
pub fn render_summary_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>9} {:>10} {:>8} {:>9}",
        "Model", "mAP", "Accuracy", "Precision", "Recall", "F1-Score"
    );
    for (name, r) in rows {
        let m = &r.overall;
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>9.3} {:>10.3} {:>8.3} {:>9.3}",
            name, cell(m.map), m.accuracy, m.macro_avg.precision, m.macro_avg.recall, m.macro_avg.f1
        );
    }
    out
}

/// Rows of `model | S | M | C | All` mAP.
pub fn render_complexity_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7} {:>7}", "Model", "S", "M", "C", "All");
    for (name, r) in rows {
        let s = |c| r.stratified.get(&c).and_then(|m: &Metrics| m.map);
        let _ = writeln!(
            out,
            "{:<12} {:>7} {:>7} {:>7} {:>7}",
            name,
            cell(s(Complexity::Simple)),
            cell(s(Complexity::Medium)),
            cell(s(Complexity::Complex)),
            cell(r.overall.map)
        );
    }
    out
}
