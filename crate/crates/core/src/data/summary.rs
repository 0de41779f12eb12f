//! Exploratory summaries: per-column statistics, histograms, frequency
//! tables, and Pearson/Spearman correlation matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnData, Dataset, TaskKind};
use crate::stats;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub name: String,
    pub count: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSummary {
    pub name: String,
    pub count: usize,
    pub missing: usize,
    pub frequencies: Vec<LevelCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    /// `None` where a correlation is undefined (constant column, too few rows).
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub negatives: usize,
    pub positives: usize,
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSummary {
    pub rows: usize,
    pub numeric: Vec<NumericSummary>,
    pub categorical: Vec<CategoricalSummary>,
    pub pearson: CorrelationMatrix,
    pub spearman: CorrelationMatrix,
    pub constant_columns: Vec<String>,
    pub class_balance: Option<ClassBalance>,
}

/// Equal-width histogram between min and max; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    if values.is_empty() {
        return Histogram {
            edges: Vec::new(),
            counts: vec![0; bins],
        };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let k = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

fn numeric_summary(col: &Column) -> NumericSummary {
    let rows: Vec<usize> = (0..col.len()).collect();
    let present = col.present_values(&rows);
    let s = stats::sorted(&present);
    let q = |p| (!s.is_empty()).then(|| stats::quantile_sorted(&s, p));
    NumericSummary {
        name: col.name.clone(),
        count: present.len(),
        missing: col.missing_count(),
        mean: (!s.is_empty()).then(|| stats::mean(&present)),
        sd: (!s.is_empty()).then(|| stats::sd(&present)),
        min: s.first().copied(),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: s.last().copied(),
        histogram: histogram(&present, HISTOGRAM_BINS),
    }
}

fn categorical_summary(col: &Column) -> CategoricalSummary {
    let ColumnData::Categorical { levels, codes } = &col.data else {
        unreachable!("categorical summary of numeric column")
    };
    let mut counts = vec![0usize; levels.len()];
    for (i, &c) in codes.iter().enumerate() {
        if !col.missing[i] {
            counts[c as usize] += 1;
        }
    }
    CategoricalSummary {
        name: col.name.clone(),
        count: col.len() - col.missing_count(),
        missing: col.missing_count(),
        frequencies: levels
            .iter()
            .zip(counts)
            .map(|(level, count)| LevelCount {
                level: level.clone(),
                count,
            })
            .collect(),
    }
}

fn is_constant(col: &Column) -> bool {
    let mut present = (0..col.len()).filter(|&i| !col.missing[i]).map(|i| col.value(i));
    match present.next() {
        None => true,
        Some(first) => present.all(|v| v == first),
    }
}

fn pairwise_complete(a: &Column, b: &Column) -> (Vec<f64>, Vec<f64>) {
    (0..a.len())
        .filter(|&i| !a.missing[i] && !b.missing[i])
        .map(|i| (a.value(i), b.value(i)))
        .unzip()
}

fn correlation_matrix(
    cols: &[&Column],
    f: impl Fn(&[f64], &[f64]) -> Option<f64> + Sync,
) -> CorrelationMatrix {
    let k = cols.len();
    let mut values = vec![vec![None; k]; k];
    let constant: Vec<bool> = cols.iter().map(|c| is_constant(c)).collect();
    let upper: Vec<(usize, usize, Option<f64>)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            let (a, b) = pairwise_complete(cols[i], cols[j]);
            (i, j, f(&a, &b))
        })
        .collect();
    for (i, j, r) in upper {
        values[i][j] = r;
        values[j][i] = r;
    }
    for i in 0..k {
        if !constant[i] {
            values[i][i] = Some(1.0);
        }
    }
    CorrelationMatrix {
        columns: cols.iter().map(|c| c.name.clone()).collect(),
        values,
    }
}

pub fn summarize(ds: &Dataset) -> EdaSummary {
    let numeric_cols: Vec<&Column> = ds
        .columns
        .iter()
        .filter(|c| matches!(c.data, ColumnData::Numeric { .. }))
        .collect();
    let numeric = numeric_cols.par_iter().map(|c| numeric_summary(c)).collect();
    let categorical = ds
        .columns
        .iter()
        .filter(|c| matches!(c.data, ColumnData::Categorical { .. }))
        .map(categorical_summary)
        .collect();
    let class_balance = (ds.task == TaskKind::Binary).then(|| {
        let y = ds.target_values();
        let positives = y.iter().filter(|v| **v == 1.0).count();
        ClassBalance {
            negatives: y.len() - positives,
            positives,
            positive_rate: positives as f64 / y.len() as f64,
        }
    });
    EdaSummary {
        rows: ds.n_rows(),
        numeric,
        categorical,
        pearson: correlation_matrix(&numeric_cols, stats::pearson),
        spearman: correlation_matrix(&numeric_cols, stats::spearman),
        constant_columns: ds
            .columns
            .iter()
            .filter(|c| is_constant(c))
            .map(|c| c.name.clone())
            .collect(),
        class_balance,
    }
}
