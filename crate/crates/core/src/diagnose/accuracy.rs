use serde::{Deserialize, Serialize};

use super::Scored;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricSet, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccuracyConfig {
    /// Decision threshold for binary metrics.
    pub threshold: f64,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        AccuracyConfig { threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub config: AccuracyConfig,
    pub train_metrics: MetricSet,
    pub test_metrics: MetricSet,
}

/// Standard metrics on each split. Undefined metrics (for example AUC on
/// a single-class split) are reported as absent.
pub fn accuracy(model: &TrainedModel, ds: &Dataset, config: &AccuracyConfig) -> Result<AccuracyResult> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(Error::invalid("threshold", "must lie in [0, 1]"));
    }
    let set = |rows| -> Result<MetricSet> {
        let s = Scored::new(model, ds, rows)?;
        Ok(MetricSet::compute(ds.task, &s.y, &s.scores, config.threshold))
    };
    Ok(AccuracyResult { config: *config, train_metrics: set(ds.train_rows())?, test_metrics: set(ds.test_rows())? })
}
