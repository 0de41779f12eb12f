use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::Scored;
use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{Metric, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;
use crate::stats;

/// Proportion floor inside the PSI logarithm.
pub const PSI_FLOOR: f64 = 1e-4;
const PSI_BINS: usize = 10;
const PSI_RATIO: f64 = 0.1;
const MIN_TEST_ROWS: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Rows ranked by their own loss, worst first.
    #[default]
    WorstSample,
    /// Rows grouped by k-means on standardized numeric features; clusters
    /// ranked by their metric, worst first.
    WorstCluster,
    /// Rows ranked by standardized distance from the train mean, farthest first.
    OuterSample,
}

impl Scenario {
    fn description(&self) -> &'static str {
        match self {
            Scenario::WorstSample => "test rows ranked by per-row loss, worst first",
            Scenario::WorstCluster => "test rows grouped by k-means on standardized numeric features, worst cluster first",
            Scenario::OuterSample => "test rows ranked by Euclidean distance from the train mean in standardized space, farthest first",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResilienceConfig {
    pub scenario: Scenario,
    /// Retained fractions of the test split.
    pub ratios: Vec<f64>,
    pub clusters: usize,
    pub restarts: usize,
    pub seed: Option<u64>,
    /// Defaults to MSE (regression) or LogLoss (binary).
    pub metric: Option<Metric>,
    pub min_test_rows: usize,
}

impl Default for ResilienceConfig {
    fn default() -> Self {
        ResilienceConfig {
            scenario: Scenario::WorstSample,
            ratios: (1..=10).rev().map(|k| k as f64 / 10.0).collect(),
            clusters: 10,
            restarts: 20,
            seed: None,
            metric: None,
            min_test_rows: MIN_TEST_ROWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ratio: f64,
    pub n: usize,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub cluster: usize,
    pub n: usize,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShift {
    pub feature: String,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceResult {
    pub config: ResilienceConfig,
    pub metric: Metric,
    pub description: String,
    pub baseline: f64,
    pub curve: Vec<CurvePoint>,
    pub clusters: Vec<ClusterStat>,
    pub worst_cluster: Option<usize>,
    /// Shift of each feature between the worst 10% and the full test split.
    pub shift: Vec<FeatureShift>,
    pub warnings: Vec<String>,
}

/// Population stability index of `actual` against `expected` over
/// matching bins, with proportions floored at [`PSI_FLOOR`].
pub fn psi(expected_counts: &[usize], actual_counts: &[usize]) -> f64 {
    let ne: usize = expected_counts.iter().sum();
    let na: usize = actual_counts.iter().sum();
    if ne == 0 || na == 0 {
        return 0.0;
    }
    expected_counts
        .iter()
        .zip(actual_counts)
        .map(|(&e, &a)| {
            let pe = (e as f64 / ne as f64).max(PSI_FLOOR);
            let pa = (a as f64 / na as f64).max(PSI_FLOOR);
            (pa - pe) * (pa / pe).ln()
        })
        .sum()
}

fn sorted_prefix(order: &[usize], ratio: f64) -> Vec<usize> {
    let take = (stats::robust_ceil(ratio * order.len() as f64) as usize).min(order.len());
    let mut idx = order[..take].to_vec();
    idx.sort_unstable();
    idx
}

/// Standardize numeric feature columns with train means and standard deviations.
fn standardized(ds: &Dataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
    let schema = ds.schema();
    let cols: Vec<usize> = (0..schema.len()).filter(|&j| schema.features[j].kind == ColumnKind::Numeric).collect();
    if cols.is_empty() {
        return Err(Error::invalid("scenario", "this scenario needs at least one numeric feature"));
    }
    let train = ds.frame(&ds.train_rows());
    let centers: Vec<(f64, f64)> = cols
        .iter()
        .map(|&j| {
            let c = train.column(j);
            let sd = stats::sd(&c);
            (stats::mean(&c), if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
        })
        .collect();
    let frame = ds.frame(rows);
    Ok(frame
        .rows()
        .map(|r| cols.iter().zip(&centers).map(|(&j, (m, s))| (r[j] - m) / s).collect())
        .collect())
}

/// Metric on progressively smaller, harder subsets of the test split.
/// At ratio 1 every scenario evaluates the full split in row order, which
/// reproduces the baseline exactly.
pub fn resilience(model: &TrainedModel, ds: &Dataset, config: &ResilienceConfig) -> Result<ResilienceResult> {
    let metric = config.metric.unwrap_or(Metric::residual(ds.task));
    metric.check_task(ds.task)?;
    if config.ratios.is_empty() || config.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::invalid("ratios", "give one or more ratios in (0, 1]"));
    }
    let test = Scored::new(model, ds, ds.test_rows())?;
    let n = test.rows.len();
    if n < config.min_test_rows.max(1) {
        return Err(Error::data(format!("resilience needs at least {} test rows, found {n}", config.min_test_rows)));
    }
    let eval = |idx: &[usize]| {
        let (y, s) = test.subset(idx);
        metric.compute(&y, &s, DEFAULT_THRESHOLD)
    };
    let baseline = metric
        .compute(&test.y, &test.scores, DEFAULT_THRESHOLD)
        .ok_or_else(|| Error::data(format!("{metric} is undefined on the test split")))?;
    let seed = config.seed.unwrap_or(0);
    let mut warnings = Vec::new();
    let mut clusters = Vec::new();
    let mut worst_cluster = None;

    let order: Vec<usize> = match config.scenario {
        Scenario::WorstSample => {
            let loss_metric = if metric.is_loss() { metric } else { Metric::residual(ds.task) };
            let loss: Vec<f64> = test
                .y
                .iter()
                .zip(&test.scores)
                .map(|(y, s)| loss_metric.row_loss(*y, *s).expect("loss metric"))
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| loss[b].total_cmp(&loss[a]).then(a.cmp(&b)));
            order
        }
        Scenario::OuterSample => {
            let z = standardized(ds, &test.rows)?;
            let dist: Vec<f64> = z.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            order
        }
        Scenario::WorstCluster => {
            if config.clusters == 0 {
                return Err(Error::invalid("clusters", "must be positive"));
            }
            let z = standardized(ds, &test.rows)?;
            let distinct: BTreeSet<Vec<u64>> = z.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            let mut k = config.clusters;
            if k > distinct.len() {
                warnings.push(format!("only {} distinct rows; using k = {} clusters instead of {k}", distinct.len(), distinct.len()));
                k = distinct.len();
            }
            let fit = kmeans(&z, k, config.restarts, seed)?;
            let mut members = vec![Vec::new(); k];
            for (i, &c) in fit.labels.iter().enumerate() {
                members[c].push(i);
            }
            clusters = members
                .iter()
                .enumerate()
                .map(|(c, idx)| ClusterStat { cluster: c, n: idx.len(), metric: if idx.is_empty() { None } else { eval(idx) } })
                .collect();
            // worst first; undefined metrics last
            let badness = |s: &ClusterStat| s.metric.map(|m| if metric.is_loss() { m } else { -m });
            let mut ranked: Vec<usize> = (0..k).collect();
            ranked.sort_by(|&a, &b| match (badness(&clusters[a]), badness(&clusters[b])) {
                (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a.cmp(&b),
            });
            worst_cluster = ranked.first().copied().filter(|&c| clusters[c].metric.is_some());
            ranked.iter().flat_map(|&c| members[c].iter().copied()).collect()
        }
    };

    let curve = config
        .ratios
        .iter()
        .map(|&ratio| {
            let idx = sorted_prefix(&order, ratio);
            CurvePoint { ratio, n: idx.len(), metric: eval(&idx) }
        })
        .collect();

    let worst = sorted_prefix(&order, PSI_RATIO);
    let schema = ds.schema();
    let frame = ds.frame(&test.rows);
    let shift = (0..schema.len())
        .map(|j| {
            let col = frame.column(j);
            let bin_of: Box<dyn Fn(f64) -> usize> = match schema.features[j].kind {
                ColumnKind::Categorical => Box::new(|v: f64| v as usize),
                ColumnKind::Numeric => {
                    let edges = stats::quantile_edges(&col, PSI_BINS);
                    let k = edges.len().saturating_sub(1).max(1);
                    Box::new(move |v: f64| edges[1..].partition_point(|e| *e < v).min(k - 1))
                }
            };
            let n_bins = col.iter().map(|v| bin_of(*v)).max().unwrap_or(0) + 1;
            let mut full = vec![0usize; n_bins];
            let mut part = vec![0usize; n_bins];
            for v in &col {
                full[bin_of(*v)] += 1;
            }
            for &i in &worst {
                part[bin_of(col[i])] += 1;
            }
            FeatureShift { feature: schema.features[j].name.clone(), psi: psi(&full, &part) }
        })
        .collect();

    let mut config = config.clone();
    config.seed = Some(seed);
    config.metric = Some(metric);
    Ok(ResilienceResult {
        description: config.scenario.description().into(),
        config,
        metric,
        baseline,
        curve,
        clusters,
        worst_cluster,
        shift,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_of_identical_distributions_is_zero() {
        assert_eq!(psi(&[10, 20, 30], &[1, 2, 3]), 0.0);
        let v = psi(&[50, 50], &[90, 10]);
        let want = (0.9 - 0.5) * (0.9f64 / 0.5).ln() + (0.1 - 0.5) * (0.1f64 / 0.5).ln();
        assert!((v - want).abs() < 1e-15);
        // empty bins are floored rather than producing infinities
        assert!(psi(&[5, 5], &[10, 0]).is_finite());
    }

    #[test]
    fn prefix_rounds_up() {
        let order: Vec<usize> = (0..40).rev().collect();
        assert_eq!(sorted_prefix(&order, 0.25), (30..40).collect::<Vec<_>>());
        assert_eq!(sorted_prefix(&order, 0.01).len(), 1);
        assert_eq!(sorted_prefix(&order, 1.0), (0..40).collect::<Vec<_>>());
    }
}
