//! Accuracy metrics for regression and binary tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
const LOGLOSS_CLIP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Mae,
    R2,
    Acc,
    Auc,
    Recall,
    Precision,
    F1,
    #[serde(rename = "logloss")]
    LogLoss,
}

impl Metric {
    pub const REGRESSION: [Metric; 3] = [Metric::Mse, Metric::Mae, Metric::R2];
    pub const BINARY: [Metric; 6] = [
        Metric::Acc,
        Metric::Auc,
        Metric::Recall,
        Metric::Precision,
        Metric::F1,
        Metric::LogLoss,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::R2 => "r2",
            Metric::Acc => "acc",
            Metric::Auc => "auc",
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
            Metric::LogLoss => "logloss",
        }
    }

    /// Loss-type metrics get worse as they grow.
    pub fn is_loss(&self) -> bool {
        matches!(self, Metric::Mse | Metric::Mae | Metric::LogLoss)
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Metric::Mse | Metric::Mae | Metric::R2 => TaskKind::Regression,
            _ => TaskKind::Binary,
        }
    }

    /// The headline metric of a task.
    pub fn primary(task: TaskKind) -> Metric {
        match task {
            TaskKind::Regression => Metric::Mse,
            TaskKind::Binary => Metric::Auc,
        }
    }

    /// Per-row loss used for residual-based diagnostics.
    pub fn residual(task: TaskKind) -> Metric {
        match task {
            TaskKind::Regression => Metric::Mse,
            TaskKind::Binary => Metric::LogLoss,
        }
    }

    pub fn check_task(&self, task: TaskKind) -> Result<()> {
        if self.task() == task {
            Ok(())
        } else {
            Err(Error::invalid("metric", format!("`{self}` does not apply to {task} tasks")))
        }
    }

    /// Metric value, `None` where undefined (empty input, single class, ...).
    pub fn compute(&self, y: &[f64], scores: &[f64], threshold: f64) -> Option<f64> {
        if y.is_empty() || y.len() != scores.len() {
            return None;
        }
        let n = y.len() as f64;
        match self {
            Metric::Mse => Some(y.iter().zip(scores).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n),
            Metric::Mae => Some(y.iter().zip(scores).map(|(a, b)| (a - b).abs()).sum::<f64>() / n),
            Metric::R2 => {
                let m = stats::mean(y);
                let ss_tot: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
                let ss_res: f64 = y.iter().zip(scores).map(|(a, b)| (a - b) * (a - b)).sum();
                (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
            }
            Metric::Acc => {
                let hits = y.iter().zip(scores).filter(|(a, s)| (**s >= threshold) == (**a == 1.0)).count();
                Some(hits as f64 / n)
            }
            Metric::Auc => auc(y, scores),
            Metric::Recall | Metric::Precision | Metric::F1 => {
                let c = Confusion::new(y, scores, threshold);
                match self {
                    Metric::Recall => c.recall(),
                    Metric::Precision => c.precision(),
                    _ => c.f1(),
                }
            }
            Metric::LogLoss => Some(
                y.iter()
                    .zip(scores)
                    .map(|(a, s)| {
                        let p = s.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
                        -(a * p.ln() + (1.0 - a) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / n,
            ),
        }
    }

    /// Per-row loss for loss-type metrics.
    pub fn row_loss(&self, y: f64, score: f64) -> Option<f64> {
        match self {
            Metric::Mse => Some((y - score) * (y - score)),
            Metric::Mae => Some((y - score).abs()),
            Metric::LogLoss => {
                let p = score.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
                Some(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        let lower = s.trim().to_ascii_lowercase();
        Metric::REGRESSION
            .iter()
            .chain(Metric::BINARY.iter())
            .copied()
            .find(|m| m.as_str() == lower || (lower == "log_loss" && *m == Metric::LogLoss))
            .ok_or_else(|| Error::invalid("metric", format!("unknown metric `{s}`")))
    }
}

struct Confusion {
    tp: f64,
    fp: f64,
    fn_: f64,
}

impl Confusion {
    fn new(y: &[f64], scores: &[f64], t: f64) -> Confusion {
        let mut c = Confusion { tp: 0.0, fp: 0.0, fn_: 0.0 };
        for (a, s) in y.iter().zip(scores) {
            match (*s >= t, *a == 1.0) {
                (true, true) => c.tp += 1.0,
                (true, false) => c.fp += 1.0,
                (false, true) => c.fn_ += 1.0,
                (false, false) => {}
            }
        }
        c
    }

    fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0.0).then(|| self.tp / d)
    }

    fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0.0).then(|| self.tp / d)
    }

    fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
    }
}

/// Rank-statistic AUC with average ranks for ties.
pub fn auc(y: &[f64], scores: &[f64]) -> Option<f64> {
    let n1 = y.iter().filter(|v| **v == 1.0).count() as f64;
    let n0 = y.len() as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return None;
    }
    let ranks = stats::average_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(y).filter(|(_, v)| **v == 1.0).map(|(r, _)| r).sum();
    Some((pos_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum MetricSet {
    Regression {
        n: usize,
        mse: Option<f64>,
        mae: Option<f64>,
        r2: Option<f64>,
    },
    Binary {
        n: usize,
        threshold: f64,
        acc: Option<f64>,
        auc: Option<f64>,
        recall: Option<f64>,
        precision: Option<f64>,
        f1: Option<f64>,
        logloss: Option<f64>,
    },
}

impl MetricSet {
    pub fn compute(task: TaskKind, y: &[f64], scores: &[f64], threshold: f64) -> MetricSet {
        let m = |metric: Metric| metric.compute(y, scores, threshold);
        match task {
            TaskKind::Regression => MetricSet::Regression {
                n: y.len(),
                mse: m(Metric::Mse),
                mae: m(Metric::Mae),
                r2: m(Metric::R2),
            },
            TaskKind::Binary => MetricSet::Binary {
                n: y.len(),
                threshold,
                acc: m(Metric::Acc),
                auc: m(Metric::Auc),
                recall: m(Metric::Recall),
                precision: m(Metric::Precision),
                f1: m(Metric::F1),
                logloss: m(Metric::LogLoss),
            },
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match (self, metric) {
            (MetricSet::Regression { mse, .. }, Metric::Mse) => *mse,
            (MetricSet::Regression { mae, .. }, Metric::Mae) => *mae,
            (MetricSet::Regression { r2, .. }, Metric::R2) => *r2,
            (MetricSet::Binary { acc, .. }, Metric::Acc) => *acc,
            (MetricSet::Binary { auc, .. }, Metric::Auc) => *auc,
            (MetricSet::Binary { recall, .. }, Metric::Recall) => *recall,
            (MetricSet::Binary { precision, .. }, Metric::Precision) => *precision,
            (MetricSet::Binary { f1, .. }, Metric::F1) => *f1,
            (MetricSet::Binary { logloss, .. }, Metric::LogLoss) => *logloss,
            _ => None,
        }
    }

    pub fn metrics(&self) -> &'static [Metric] {
        match self {
            MetricSet::Regression { .. } => &Metric::REGRESSION,
            MetricSet::Binary { .. } => &Metric::BINARY,
        }
    }
}
