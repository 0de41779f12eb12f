use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{ColumnData, Dataset, Partition, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::stats;

/// The level substituted for missing categorical cells.
pub const MISSING_LEVEL: &str = "missing";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            test_ratio: 0.2,
            seed: 0,
        }
    }
}

/// Split `n` test rows across classes proportionally (largest remainder,
/// ties to the lower class).
fn allocate(class_sizes: &[usize], ratio: f64, total_test: usize) -> Vec<usize> {
    let exact: Vec<f64> = class_sizes.iter().map(|&n| n as f64 * ratio).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total_test.saturating_sub(alloc.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[c] < class_sizes[c] {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Random train/test split plus imputation of missing feature cells.
///
/// The test partition holds `round(ratio * n)` rows, stratified by class for
/// binary tasks. Numeric gaps take the train-partition median, categorical
/// gaps a dedicated level.
pub fn prepare(ds: &Dataset, test_ratio: f64, seed: u64) -> Result<Dataset> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::invalid("test_ratio", "must lie strictly between 0 and 1"));
    }
    let n = ds.n_rows();
    if n < 5 {
        return Err(Error::data(format!("prepare needs at least 5 rows, got {n}")));
    }
    let total_test = stats::round_count(test_ratio * n as f64);
    if total_test == 0 || total_test >= n {
        return Err(Error::data("split would leave an empty partition"));
    }

    let groups: Vec<Vec<usize>> = match ds.task {
        TaskKind::Regression => vec![(0..n).collect()],
        TaskKind::Binary => {
            let y = ds.target_values();
            let zeros = (0..n).filter(|&i| y[i] == 0.0).collect();
            let ones = (0..n).filter(|&i| y[i] == 1.0).collect();
            vec![zeros, ones]
        }
    };
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, test_ratio, total_test);

    let mut split = vec![Partition::Train; n];
    for (class, (mut rows, k)) in groups.into_iter().zip(alloc).enumerate() {
        let mut rng = rng_for(seed, &[stream::SPLIT, class as u64]);
        rows.shuffle(&mut rng);
        for &r in &rows[..k] {
            split[r] = Partition::Test;
        }
    }

    let mut out = ds.clone();
    out.split = split;
    let train = out.train_rows();
    let target = out.target.clone();
    for col in out.columns.iter_mut().filter(|c| c.name != target) {
        if !col.missing.iter().any(|m| *m) {
            continue;
        }
        match &mut col.data {
            ColumnData::Numeric { values } => {
                let present: Vec<f64> = train
                    .iter()
                    .filter(|&&r| !col.missing[r])
                    .map(|&r| values[r])
                    .collect();
                if present.is_empty() {
                    return Err(Error::data(format!(
                        "column `{}` has no observed train values to impute from",
                        col.name
                    )));
                }
                let median = stats::quantile(&present, 0.5);
                for (v, m) in values.iter_mut().zip(&col.missing) {
                    if *m {
                        *v = median;
                    }
                }
            }
            ColumnData::Categorical { levels, codes } => {
                let code = match levels.iter().position(|l| l == MISSING_LEVEL) {
                    Some(k) => k as u32,
                    None => {
                        levels.push(MISSING_LEVEL.to_string());
                        (levels.len() - 1) as u32
                    }
                };
                for (c, m) in codes.iter_mut().zip(&col.missing) {
                    if *m {
                        *c = code;
                    }
                }
            }
        }
        col.missing.iter_mut().for_each(|m| *m = false);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn reg(n: usize) -> Dataset {
        Dataset::new(
            "p",
            vec![
                Column::numeric("x", (0..n).map(|v| v as f64).collect()),
                Column::numeric("y", (0..n).map(|v| (v % 3) as f64).collect()),
            ],
            "y",
            TaskKind::Regression,
        )
        .unwrap()
    }

    #[test]
    fn rounding_rule() {
        for seed in 0..5 {
            let p = prepare(&reg(10), 0.2, seed).unwrap();
            assert_eq!(p.test_rows().len(), 2);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = prepare(&reg(50), 0.3, 9).unwrap();
        let b = prepare(&reg(50), 0.3, 9).unwrap();
        assert_eq!(a.split, b.split);
        let c = prepare(&reg(50), 0.3, 10).unwrap();
        assert_ne!(a.split, c.split);
    }

    #[test]
    fn stratified_binary() {
        let n = 1000;
        let y: Vec<f64> = (0..n).map(|i| if i % 10 < 3 { 1.0 } else { 0.0 }).collect();
        let ds = Dataset::new(
            "b",
            vec![Column::numeric("x", (0..n).map(|v| v as f64).collect()), Column::numeric("y", y)],
            "y",
            TaskKind::Binary,
        )
        .unwrap();
        let p = prepare(&ds, 0.2, 3).unwrap();
        let test = p.test_rows();
        assert_eq!(test.len(), 200);
        let pos = p.targets_of(&test).iter().filter(|v| **v == 1.0).count();
        assert!((pos as i64 - 60).abs() <= 1);
    }

    #[test]
    fn rejects_bad_ratio_and_tiny_data() {
        assert!(prepare(&reg(10), 0.0, 1).is_err());
        assert!(prepare(&reg(10), 1.0, 1).is_err());
        assert!(prepare(&reg(4), 0.5, 1).is_err());
        // round(0.01 * 10) = 0 test rows
        assert!(prepare(&reg(10), 0.01, 1).is_err());
    }

    #[test]
    fn imputes_median_and_missing_level() {
        let mut xmask = vec![false; 10];
        xmask[0] = true;
        let mut cmask = vec![false; 10];
        cmask[1] = true;
        let ds = Dataset::new(
            "m",
            vec![
                Column::numeric("x", (0..10).map(|v| v as f64).collect()).with_missing(xmask),
                Column::categorical("c", &["a"; 10]).with_missing(cmask),
                Column::numeric("y", (0..10).map(|v| v as f64).collect()),
            ],
            "y",
            TaskKind::Regression,
        )
        .unwrap();
        let p = prepare(&ds, 0.2, 0).unwrap();
        assert!(!p.has_missing_features());
        let train = p.train_rows();
        let present: Vec<f64> = train.iter().filter(|&&r| r != 0).map(|&r| r as f64).collect();
        assert_eq!(p.column("x").unwrap().value(0), stats::quantile(&present, 0.5));
        let c = p.column("c").unwrap();
        assert_eq!(c.levels().unwrap(), &["a".to_string(), MISSING_LEVEL.to_string()]);
        assert_eq!(c.value(1), 1.0);
    }
}
