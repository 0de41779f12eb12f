use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub ranked: Vec<FeatureScore>,
    /// Set when more features were requested than exist.
    pub truncated: bool,
}

/// Correlation ratio: sqrt(between-group SS / total SS).
pub fn correlation_ratio(codes: &[u32], n_levels: usize, y: &[f64]) -> f64 {
    let m = stats::mean(y);
    let total: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sums = vec![0.0; n_levels];
    let mut counts = vec![0usize; n_levels];
    for (&c, &v) in codes.iter().zip(y) {
        sums[c as usize] += v;
        counts[c as usize] += 1;
    }
    let between: f64 = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| {
            let gm = s / n as f64;
            n as f64 * (gm - m) * (gm - m)
        })
        .sum();
    (between / total).sqrt().min(1.0)
}

fn score(col: &Column, rows: &[usize], y: &[f64]) -> f64 {
    let present: Vec<usize> = rows.iter().copied().filter(|&r| !col.missing[r]).collect();
    let ys: Vec<f64> = present.iter().map(|&r| y[r]).collect();
    match &col.data {
        ColumnData::Numeric { values } => {
            let xs: Vec<f64> = present.iter().map(|&r| values[r]).collect();
            stats::pearson(&xs, &ys).map(f64::abs).unwrap_or(0.0)
        }
        ColumnData::Categorical { levels, codes } => {
            let cs: Vec<u32> = present.iter().map(|&r| codes[r]).collect();
            correlation_ratio(&cs, levels.len(), &ys)
        }
    }
}

/// Rank features by |Pearson r| with the target (numeric) or the correlation
/// ratio (categorical), computed on the train partition.
pub fn feature_select(ds: &Dataset, top_k: usize) -> Result<FeatureSelection> {
    if top_k == 0 {
        return Err(Error::invalid("top_k", "must be positive"));
    }
    if ds.n_features() == 0 {
        return Err(Error::data("dataset has no features"));
    }
    let rows = ds.train_rows();
    let y = ds.target_values();
    let mut ranked: Vec<FeatureScore> = ds
        .feature_columns()
        .map(|c| FeatureScore {
            feature: c.name.clone(),
            score: score(c, &rows, y),
        })
        .collect();
    // stable sort keeps column order among ties
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let truncated = top_k > ranked.len();
    ranked.truncate(top_k);
    Ok(FeatureSelection { ranked, truncated })
}
