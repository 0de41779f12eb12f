use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnQuality {
    pub name: String,
    pub kind: ColumnKind,
    pub missing: usize,
    pub constant: bool,
    /// IQR-rule outliers; only reported for numeric columns.
    pub outliers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataQualityReport {
    pub rows: usize,
    pub duplicate_rows: usize,
    pub columns: Vec<ColumnQuality>,
}

/// Count of values outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` (type-7 quartiles).
pub fn iqr_outliers(values: &[f64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let s = stats::sorted(values);
    let q1 = stats::quantile_sorted(&s, 0.25);
    let q3 = stats::quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    values.iter().filter(|&&v| v < lo || v > hi).count()
}

pub fn data_quality(ds: &Dataset) -> DataQualityReport {
    let all = ds.all_rows();
    let columns = ds
        .columns
        .iter()
        .map(|c| {
            let present = c.present_values(&all);
            ColumnQuality {
                name: c.name.clone(),
                kind: c.kind(),
                missing: c.missing_count(),
                constant: present.windows(2).all(|w| w[0] == w[1]),
                outliers: (c.kind() == ColumnKind::Numeric).then(|| iqr_outliers(&present)),
            }
        })
        .collect();

    // Row identity: missing cells compare equal to each other and to nothing else.
    let mut seen: HashSet<Vec<Option<u64>>> = HashSet::with_capacity(ds.n_rows());
    for i in 0..ds.n_rows() {
        let key = ds
            .columns
            .iter()
            .map(|c| (!c.missing[i]).then(|| c.value(i).to_bits()))
            .collect();
        seen.insert(key);
    }
    DataQualityReport {
        rows: ds.n_rows(),
        duplicate_rows: ds.n_rows() - seen.len(),
        columns,
    }
}
