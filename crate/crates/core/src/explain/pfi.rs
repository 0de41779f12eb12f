use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predict_all;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{Metric, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;
use crate::rng::{rng_for, stream};
use crate::stats;

pub const PFI_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiFeature {
    pub feature: usize,
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub sd: f64,
    pub degradations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiResult {
    pub metric: Metric,
    pub base_metric: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: Vec<PfiFeature>,
}

/// The permuted copy of a test column used for `(feature, repeat)`.
pub fn permuted_column(column: &[f64], seed: u64, feature: usize, repeat: usize) -> Vec<f64> {
    let mut perm = column.to_vec();
    perm.shuffle(&mut rng_for(seed, &[stream::PFI, feature as u64, repeat as u64]));
    perm
}

/// Permutation importance on the test split. Degradation is oriented so
/// larger means more important for both loss and score metrics.
pub fn pfi(model: &TrainedModel, ds: &Dataset, metric: Metric, repeats: usize, seed: u64) -> Result<PfiResult> {
    model.require_evaluable("permutation feature importance")?;
    metric.check_task(ds.task)?;
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be positive"));
    }
    let rows = ds.test_rows();
    if rows.is_empty() {
        return Err(Error::data("the test partition is empty"));
    }
    let frame = ds.frame(&rows);
    let y = ds.targets_of(&rows);
    let eval = |scores: &[f64]| {
        metric
            .compute(&y, scores, DEFAULT_THRESHOLD)
            .ok_or_else(|| Error::data(format!("{metric} is undefined on the test split")))
    };
    let base = eval(&predict_all(model, &frame)?)?;
    let names = ds.feature_names();
    let features = (0..frame.n_cols())
        .into_par_iter()
        .map(|j| {
            let column = frame.column(j);
            let degradations = (0..repeats)
                .map(|r| {
                    let perm = permuted_column(&column, seed, j, r);
                    let mut shuffled = frame.clone();
                    shuffled.set_column(j, &perm);
                    let m = eval(&predict_all(model, &shuffled)?)?;
                    Ok(if metric.is_loss() { m - base } else { base - m })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(PfiFeature {
                feature: j,
                name: names[j].clone(),
                mean: stats::mean(&degradations),
                sd: if repeats > 1 { stats::sd(&degradations) } else { 0.0 },
                degradations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PfiResult { metric, base_metric: base, repeats, seed, features })
}
