use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::slicing::{BinMethod, SliceAxis, SliceBound};
use super::Scored;
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::rng::{rng_for, stream};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilityConfig {
    /// Miscoverage level.
    pub alpha: f64,
    /// Fraction of the train split carved out for calibration.
    pub calib_ratio: f64,
    pub seed: Option<u64>,
    /// Optional feature for a per-slice coverage and width breakdown.
    pub slice_feature: Option<String>,
    pub slice_bins: usize,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig { alpha: 0.1, calib_ratio: 0.2, seed: None, slice_feature: None, slice_bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySlice {
    pub bound: SliceBound,
    pub n: usize,
    pub coverage: Option<f64>,
    /// Mean interval width (regression) or mean set size (binary).
    pub mean_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub config: ReliabilityConfig,
    pub task: TaskKind,
    pub calibration_size: usize,
    /// Dataset row ids used for calibration.
    pub calibration_rows: Vec<usize>,
    /// Rank of `q_hat` among the sorted calibration scores (1-based).
    pub quantile_index: usize,
    pub q_hat: f64,
    pub recipe: String,
    pub test_size: usize,
    pub coverage: f64,
    /// Regression: mean interval width.
    pub mean_width: Option<f64>,
    /// Binary: mean prediction-set size.
    pub mean_set_size: Option<f64>,
    pub slices: Vec<ReliabilitySlice>,
}

/// Non-conformity score: absolute residual, or one minus the probability
/// given to the true class.
fn score(task: TaskKind, y: f64, pred: f64) -> f64 {
    match task {
        TaskKind::Regression => (y - pred).abs(),
        TaskKind::Binary => 1.0 - if y == 1.0 { pred } else { 1.0 - pred },
    }
}

/// Rank `ceil((n + 1)(1 - alpha))` of the conformal quantile, or `None`
/// when it exceeds `n` and the quantile is undefined.
pub(crate) fn conformal_index(n_cal: usize, alpha: f64) -> Option<usize> {
    let k = stats::robust_ceil((n_cal as f64 + 1.0) * (1.0 - alpha)) as usize;
    (k <= n_cal).then_some(k.max(1))
}

/// Split conformal prediction with the calibration rows carved from the
/// train split. The model should not have been fitted on those rows for
/// the coverage guarantee to hold.
pub fn reliability(model: &TrainedModel, ds: &Dataset, config: &ReliabilityConfig) -> Result<ReliabilityResult> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if !(config.calib_ratio > 0.0 && config.calib_ratio <= 1.0) {
        return Err(Error::invalid("calib_ratio", "must lie in (0, 1]"));
    }
    let seed = config.seed.unwrap_or(0);
    let mut train = ds.train_rows();
    train.shuffle(&mut rng_for(seed, &[stream::CALIBRATION]));
    let n_cal = stats::round_count(config.calib_ratio * train.len() as f64).min(train.len());
    let mut cal_rows = train[..n_cal].to_vec();
    cal_rows.sort_unstable();
    let k = conformal_index(n_cal, config.alpha).ok_or_else(|| {
        Error::invalid(
            "alpha",
            format!(
                "{n_cal} calibration rows are too few for alpha = {}: the conformal quantile is undefined",
                config.alpha
            ),
        )
    })?;
    let task = ds.task;
    let cal = Scored::new(model, ds, cal_rows.clone())?;
    let cal_scores: Vec<f64> = cal.y.iter().zip(&cal.scores).map(|(y, p)| score(task, *y, *p)).collect();
    let q_hat = stats::sorted(&cal_scores)[k - 1];

    let test = Scored::new(model, ds, ds.test_rows())?;
    if test.rows.is_empty() {
        return Err(Error::data("the test partition is empty"));
    }
    // per test row: (covered, width or set size)
    let per_row: Vec<(bool, f64)> = test
        .y
        .iter()
        .zip(&test.scores)
        .map(|(&y, &p)| match task {
            TaskKind::Regression => ((y - p).abs() <= q_hat, 2.0 * q_hat),
            TaskKind::Binary => {
                let in_set = |c: f64| score(task, c, p) <= q_hat;
                let size = f64::from(u8::from(in_set(0.0)) + u8::from(in_set(1.0)));
                (in_set(y), size)
            }
        })
        .collect();
    let summarize = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut n, mut hit, mut width) = (0usize, 0usize, 0.0);
        for i in idx {
            n += 1;
            hit += usize::from(per_row[i].0);
            width += per_row[i].1;
        }
        (n, (n > 0).then(|| hit as f64 / n as f64), (n > 0).then(|| width / n as f64))
    };
    let (n_test, coverage, mean) = summarize(&mut (0..per_row.len()));

    let mut slices = Vec::new();
    if let Some(f) = &config.slice_feature {
        let axis = SliceAxis::build(ds, f, BinMethod::Quantile, config.slice_bins.max(1))?;
        let j = ds.schema().index_of(f).expect("checked by build");
        let column = ds.frame(&test.rows).column(j);
        for b in 0..axis.n_bins() {
            let (n, coverage, mean_width) = summarize(&mut (0..column.len()).filter(|&i| axis.bin(column[i]) == Some(b)));
            slices.push(ReliabilitySlice { bound: axis.bound(b), n, coverage, mean_width });
        }
    }

    let recipe = match task {
        TaskKind::Regression => "scores |y - pred| on the calibration rows; q_hat is the k-th smallest with k = ceil((n_cal + 1)(1 - alpha)); interval pred +/- q_hat",
        TaskKind::Binary => "scores 1 - p(true class) on the calibration rows; q_hat is the k-th smallest with k = ceil((n_cal + 1)(1 - alpha)); set {c : 1 - p(c) <= q_hat}",
    };
    let mut config = config.clone();
    config.seed = Some(seed);
    Ok(ReliabilityResult {
        config,
        task,
        calibration_size: n_cal,
        calibration_rows: cal_rows,
        quantile_index: k,
        q_hat,
        recipe: recipe.into(),
        test_size: n_test,
        coverage: coverage.expect("test split is non-empty"),
        mean_width: (task == TaskKind::Regression).then(|| mean.unwrap()),
        mean_set_size: (task == TaskKind::Binary).then(|| mean.unwrap()),
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_arithmetic() {
        assert_eq!(conformal_index(9, 0.1), Some(9));
        assert_eq!(conformal_index(8, 0.1), None);
        assert_eq!(conformal_index(19, 0.1), Some(18));
        assert_eq!(conformal_index(2000, 0.1), Some(1801));
        assert_eq!(conformal_index(1, 0.5), Some(1));
    }

    #[test]
    fn binary_scores() {
        assert!((score(TaskKind::Binary, 1.0, 0.8) - 0.2).abs() < 1e-15);
        assert!((score(TaskKind::Binary, 0.0, 0.8) - 0.8).abs() < 1e-15);
        assert_eq!(score(TaskKind::Regression, 1.0, 3.0), 2.0);
    }
}
