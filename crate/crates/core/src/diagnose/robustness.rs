use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::explain::predict_all;
use crate::metrics::{Metric, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;
use crate::rng::{rng_for, stream};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    /// Perturbation scales, in units of each feature's train standard deviation.
    pub lambdas: Vec<f64>,
    pub repeats: usize,
    pub seed: Option<u64>,
    /// Features to perturb; all numeric features when unset.
    pub features: Option<Vec<String>>,
    /// Defaults to MSE (regression) or AUC (binary).
    pub metric: Option<Metric>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            lambdas: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            repeats: 10,
            seed: None,
            features: None,
            metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessLevel {
    pub lambda: f64,
    pub mean: f64,
    /// Sample standard deviation over repeats (0 for one repeat).
    pub sd: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub config: RobustnessConfig,
    pub metric: Metric,
    pub baseline: f64,
    pub features: Vec<String>,
    pub levels: Vec<RobustnessLevel>,
}

/// Metric on the test split after adding `lambda * sd_j * N(0, 1)` noise to
/// each perturbed feature. Each (lambda, repeat) pair draws from its own
/// derived stream.
pub fn robustness(model: &TrainedModel, ds: &Dataset, config: &RobustnessConfig) -> Result<RobustnessResult> {
    model.require_evaluable("robustness")?;
    let metric = config.metric.unwrap_or(Metric::primary(ds.task));
    metric.check_task(ds.task)?;
    if config.repeats == 0 {
        return Err(Error::invalid("repeats", "must be positive"));
    }
    if config.lambdas.is_empty() || config.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("lambdas", "give one or more non-negative scales"));
    }
    let schema = ds.schema();
    let cols: Vec<usize> = match &config.features {
        Some(names) => names
            .iter()
            .map(|n| {
                let j = schema.index_of(n).ok_or_else(|| Error::MissingColumn(n.clone()))?;
                if schema.features[j].kind != ColumnKind::Numeric {
                    return Err(Error::invalid("features", format!("`{n}` is not numeric")));
                }
                Ok(j)
            })
            .collect::<Result<_>>()?,
        None => (0..schema.len()).filter(|&j| schema.features[j].kind == ColumnKind::Numeric).collect(),
    };
    if cols.is_empty() {
        return Err(Error::invalid("features", "robustness needs at least one numeric feature"));
    }
    let train = ds.frame(&ds.train_rows());
    let sds: Vec<f64> = cols.iter().map(|&j| stats::sd(&train.column(j))).collect();
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
    let baseline = eval(&predict_all(model, &frame)?)?;
    let seed = config.seed.unwrap_or(0);

    let levels = config
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let values = (0..config.repeats)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_for(seed, &[stream::ROBUSTNESS, lambda.to_bits(), r as u64]);
                    let mut noisy = frame.clone();
                    for i in 0..noisy.n_rows() {
                        for (&j, sd) in cols.iter().zip(&sds) {
                            let e: f64 = rng.sample(StandardNormal);
                            noisy.set(i, j, noisy.get(i, j) + lambda * sd * e);
                        }
                    }
                    eval(&predict_all(model, &noisy)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(RobustnessLevel {
                lambda,
                mean: stats::mean(&values),
                sd: if values.len() > 1 { stats::sd(&values) } else { 0.0 },
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut config = config.clone();
    config.seed = Some(seed);
    config.metric = Some(metric);
    Ok(RobustnessResult {
        config,
        metric,
        baseline,
        features: cols.iter().map(|&j| schema.features[j].name.clone()).collect(),
        levels,
    })
}
