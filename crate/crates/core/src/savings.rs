//! Annotation-time accounting: how much per-object labeling time the
//! correctly auto-labeled crops save, per shape complexity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::store::Complexity;

/// Seconds a human needs to label one object of each complexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub per_object_seconds: BTreeMap<Complexity, f64>,
}

impl Default for TimeModel {
    fn default() -> Self {
        Self {
            per_object_seconds: BTreeMap::from([
                (Complexity::Simple, 2.27),
                (Complexity::Medium, 2.44),
                (Complexity::Complex, 2.82),
            ]),
        }
    }
}

impl TimeModel {
    pub fn validate(&self) -> Result<()> {
        for c in Complexity::ALL {
            match self.per_object_seconds.get(&c) {
                Some(&t) if t > 0.0 && t.is_finite() => {}
                _ => return Err(Error::Config(format!("time model needs a positive time for {c}"))),
            }
        }
        Ok(())
    }

    pub fn seconds(&self, c: Complexity) -> f64 {
        self.per_object_seconds[&c]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub retrieved: u64,
    pub ground_truth_total: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RetrievalCounts {
    pub rows: BTreeMap<Complexity, CountRow>,
}

impl RetrievalCounts {
    pub fn from_rows(rows: [(u64, u64); 3]) -> Result<Self> {
        let counts = Self {
            rows: Complexity::ALL
                .into_iter()
                .zip(rows)
                .map(|(c, (retrieved, ground_truth_total))| {
                    (
                        c,
                        CountRow {
                            retrieved,
                            ground_truth_total,
                        },
                    )
                })
                .collect(),
        };
        counts.validate()?;
        Ok(counts)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, row) in &self.rows {
            if row.retrieved > row.ground_truth_total {
                return Err(Error::Config(format!(
                    "{c}: retrieved {} exceeds ground truth {}",
                    row.retrieved, row.ground_truth_total
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self, c: Complexity) -> CountRow {
        self.rows.get(&c).copied().unwrap_or_default()
    }
}

/// Correct predictions and all truths, per complexity.
pub fn count_retrieved(preds: &[Prediction]) -> Result<RetrievalCounts> {
    let mut rows: BTreeMap<Complexity, CountRow> = BTreeMap::new();
    for p in preds {
        let c = p.complexity.ok_or_else(|| Error::MissingComplexity(p.record_id.clone()))?;
        let row = rows.entry(c).or_default();
        row.ground_truth_total += 1;
        if p.is_correct() {
            row.retrieved += 1;
        }
    }
    Ok(RetrievalCounts { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub retrieved: u64,
    pub ground_truth_total: u64,
    pub time_saved_seconds: f64,
    pub gt_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub rows: BTreeMap<Complexity, SavingsRow>,
    pub total_saved_seconds: f64,
    pub total_gt_seconds: f64,
    pub percent_saved: f64,
}

pub fn compute_savings(counts: &RetrievalCounts, tm: &TimeModel) -> Result<SavingsReport> {
    counts.validate()?;
    tm.validate()?;
    let rows: BTreeMap<Complexity, SavingsRow> = Complexity::ALL
        .into_iter()
        .map(|c| {
            let row = counts.row(c);
            let t = tm.seconds(c);
            (
                c,
                SavingsRow {
                    retrieved: row.retrieved,
                    ground_truth_total: row.ground_truth_total,
                    time_saved_seconds: row.retrieved as f64 * t,
                    gt_time_seconds: row.ground_truth_total as f64 * t,
                },
            )
        })
        .collect();
    let total_saved_seconds: f64 = rows.values().map(|r| r.time_saved_seconds).sum();
    let total_gt_seconds: f64 = rows.values().map(|r| r.gt_time_seconds).sum();
    let percent_saved = if total_gt_seconds > 0.0 {
        100.0 * total_saved_seconds / total_gt_seconds
    } else {
        0.0
    };
    Ok(SavingsReport {
        rows,
        total_saved_seconds,
        total_gt_seconds,
        percent_saved,
    })
}

/// `H:MM:SS`, fractional seconds truncated.
pub fn format_hms(seconds: f64) -> String {
    let s = seconds.max(0.0).trunc() as u64;
    format!("{}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Inverse of [`format_hms`].
pub fn parse_hms(text: &str) -> Option<u64> {
    let mut parts = text.split(':').map(|p| p.parse::<u64>().ok());
    let (h, m, s) = (parts.next()??, parts.next()??, parts.next()??);
    if parts.next().is_some() || m >= 60 || s >= 60 {
        return None;
    }
    Some(h * 3600 + m * 60 + s)
}

impl SavingsReport {
    /// Cells in table order: Simple, Medium, Complex, Total as `saved (gt)`, then `% Saved`.
    pub fn cells(&self) -> Vec<String> {
        let mut cells: Vec<String> = Complexity::ALL
            .iter()
            .map(|c| {
                let r = &self.rows[c];
                format!("{} ({})", format_hms(r.time_saved_seconds), format_hms(r.gt_time_seconds))
            })
            .collect();
        cells.push(format!(
            "{} ({})",
            format_hms(self.total_saved_seconds),
            format_hms(self.total_gt_seconds)
        ));
        cells.push(format!("{:.1}%", self.percent_saved));
        cells
    }
}

const SAVINGS_HEADER: [&str; 5] = ["Simple", "Medium", "Complex", "Total", "% Saved"];

fn render_rows(rows: &[(&str, &SavingsReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "Dataset");
    for h in SAVINGS_HEADER {
        let _ = write!(out, " {h:>19}");
    }
    out.push('\n');
    for (name, report) in rows {
        let _ = write!(out, "{name:<12}");
        for c in report.cells() {
            let _ = write!(out, " {c:>19}");
        }
        out.push('\n');
    }
    out
}

pub fn render_savings(report: &SavingsReport) -> String {
    render_rows(&[("", report)])
}

/// One row per named dataset.
pub fn render_savings_table(rows: &[(&str, &SavingsReport)]) -> String {
    render_rows(rows)
}
