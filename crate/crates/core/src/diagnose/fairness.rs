use serde::{Deserialize, Serialize};

use super::slicing::{BinMethod, SliceAxis, SliceBound};
use super::Scored;
use crate::data::{ColumnKind, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::explain::predict_all;
use crate::metrics::{Metric, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;
use crate::stats;

/// Four-fifths rule.
pub const AIR_THRESHOLD: f64 = 0.8;
pub const MIN_GROUP_SIZE: usize = 30;

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_segment_bins() -> usize {
    5
}
fn default_debias_bins() -> Vec<usize> {
    vec![2, 3, 4, 5, 8]
}
fn default_min_group() -> usize {
    MIN_GROUP_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessConfig {
    /// Protected feature. Categorical levels are the groups; numeric
    /// features need `cutpoints`.
    pub protected: String,
    /// Reference group label; defaults to the largest group.
    #[serde(default)]
    pub reference: Option<String>,
    /// Groups compared against the reference; defaults to all others.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    #[serde(default)]
    pub cutpoints: Option<Vec<f64>>,
    /// A score at or above the threshold is the favorable outcome.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub segment: Option<String>,
    #[serde(default = "default_segment_bins")]
    pub segment_bins: usize,
    /// Numeric feature whose coarsening is added to the de-bias frontier.
    #[serde(default)]
    pub debias_feature: Option<String>,
    #[serde(default = "default_debias_bins")]
    pub debias_bins: Vec<usize>,
    #[serde(default = "default_min_group")]
    pub min_group_size: usize,
}

impl FairnessConfig {
    pub fn new(protected: impl Into<String>) -> FairnessConfig {
        FairnessConfig {
            protected: protected.into(),
            reference: None,
            groups: None,
            cutpoints: None,
            threshold: default_threshold(),
            segment: None,
            segment_bins: default_segment_bins(),
            debias_feature: None,
            debias_bins: default_debias_bins(),
            min_group_size: MIN_GROUP_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group: String,
    pub n: usize,
    pub favorable_rate: Option<f64>,
    /// Favorable rate relative to the reference group.
    pub air: Option<f64>,
    pub reference: bool,
    /// Below the minimum group size.
    pub excluded: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStat {
    pub bound: SliceBound,
    pub n: usize,
    pub groups: Vec<GroupStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DebiasOption {
    Threshold { threshold: f64 },
    Binning { feature: String, bins: usize, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub option: DebiasOption,
    /// Smallest AIR over the compared groups.
    pub min_air: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessResult {
    pub config: FairnessConfig,
    pub reference: String,
    pub groups: Vec<GroupStat>,
    pub disparity: bool,
    pub segments: Vec<SegmentStat>,
    pub frontier: Vec<FrontierPoint>,
    pub warnings: Vec<String>,
}

/// Group membership of each row and the group labels.
fn protected_groups(ds: &Dataset, rows: &[usize], config: &FairnessConfig) -> Result<(Vec<usize>, Vec<String>)> {
    let schema = ds.schema();
    let j = schema.index_of(&config.protected).ok_or_else(|| Error::MissingColumn(config.protected.clone()))?;
    let col = ds.frame(rows).column(j);
    match (schema.features[j].kind, &config.cutpoints) {
        (ColumnKind::Categorical, None) => Ok((col.iter().map(|v| *v as usize).collect(), schema.features[j].levels.clone())),
        (ColumnKind::Categorical, Some(_)) => Err(Error::invalid("cutpoints", "only apply to a numeric protected feature")),
        (ColumnKind::Numeric, None) => Err(Error::invalid("cutpoints", "a numeric protected feature needs cutpoints")),
        (ColumnKind::Numeric, Some(cuts)) => {
            if cuts.is_empty() || cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("cutpoints", "give strictly increasing finite cutpoints"));
            }
            let mut labels = vec![format!("<= {}", cuts[0])];
            labels.extend(cuts.windows(2).map(|w| format!("({}, {}]", w[0], w[1])));
            labels.push(format!("> {}", cuts[cuts.len() - 1]));
            Ok((col.iter().map(|v| cuts.partition_point(|c| c < v)).collect(), labels))
        }
    }
}

struct Groups<'a> {
    membership: &'a [usize],
    labels: &'a [String],
    reference: usize,
    compared: &'a [usize],
    min_size: usize,
}

impl Groups<'_> {
    /// Group statistics over positions `idx` with favorable = score >= t.
    fn stats(&self, idx: &[usize], scores: &[f64], t: f64) -> Vec<GroupStat> {
        let k = self.labels.len();
        let mut n = vec![0usize; k];
        let mut fav = vec![0usize; k];
        for &i in idx {
            let g = self.membership[i];
            n[g] += 1;
            fav[g] += usize::from(scores[i] >= t);
        }
        let rate = |g: usize| (n[g] > 0).then(|| fav[g] as f64 / n[g] as f64);
        let ref_rate = if n[self.reference] >= self.min_size { rate(self.reference) } else { None };
        std::iter::once(self.reference)
            .chain(self.compared.iter().copied())
            .map(|g| {
                let excluded = n[g] < self.min_size;
                let air = match (ref_rate, rate(g)) {
                    (Some(r), Some(p)) if r > 0.0 && !excluded => Some(p / r),
                    _ => None,
                };
                GroupStat {
                    group: self.labels[g].clone(),
                    n: n[g],
                    favorable_rate: rate(g),
                    air,
                    reference: g == self.reference,
                    excluded,
                    flagged: g != self.reference && air.is_some_and(|a| a < AIR_THRESHOLD),
                }
            })
            .collect()
    }

    fn min_air(&self, idx: &[usize], scores: &[f64], t: f64) -> Option<f64> {
        self.stats(idx, scores, t)
            .iter()
            .filter(|s| !s.reference)
            .filter_map(|s| s.air)
            .min_by(f64::total_cmp)
    }
}

/// Adverse impact ratios on the test split, optionally segmented, plus a
/// de-bias frontier over decision thresholds and feature coarsening.
pub fn fairness(model: &TrainedModel, ds: &Dataset, config: &FairnessConfig) -> Result<FairnessResult> {
    if ds.task != TaskKind::Binary {
        return Err(Error::Capability("fairness testing supports binary tasks only".into()));
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(Error::invalid("threshold", "must lie in [0, 1]"));
    }
    let test = Scored::new(model, ds, ds.test_rows())?;
    if test.rows.is_empty() {
        return Err(Error::data("the test partition is empty"));
    }
    let (membership, labels) = protected_groups(ds, &test.rows, config)?;
    let index_of = |name: &str| {
        labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::invalid("group", format!("unknown group `{name}` (groups: {})", labels.join(", "))))
    };
    let mut sizes = vec![0usize; labels.len()];
    for &g in &membership {
        sizes[g] += 1;
    }
    let reference = match &config.reference {
        Some(r) => index_of(r)?,
        None => (0..labels.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap_or(0),
    };
    if sizes[reference] < config.min_group_size {
        return Err(Error::data(format!(
            "reference group `{}` has {} rows, fewer than {}",
            labels[reference], sizes[reference], config.min_group_size
        )));
    }
    let compared: Vec<usize> = match &config.groups {
        Some(gs) => gs.iter().map(|g| index_of(g)).collect::<Result<_>>()?,
        None => (0..labels.len()).filter(|&g| g != reference && sizes[g] > 0).collect(),
    };
    if compared.contains(&reference) {
        return Err(Error::invalid("groups", "the reference group cannot also be compared"));
    }
    let groups = Groups { membership: &membership, labels: &labels, reference, compared: &compared, min_size: config.min_group_size };
    let all: Vec<usize> = (0..test.rows.len()).collect();
    let stats_main = groups.stats(&all, &test.scores, config.threshold);
    let warnings: Vec<String> = stats_main
        .iter()
        .filter(|s| s.excluded)
        .map(|s| format!("group `{}` has {} rows, fewer than {}; excluded", s.group, s.n, config.min_group_size))
        .collect();
    let disparity = stats_main.iter().any(|s| s.flagged);

    let mut segments = Vec::new();
    if let Some(seg) = &config.segment {
        let axis = SliceAxis::build(ds, seg, BinMethod::Quantile, config.segment_bins.max(1))?;
        let j = ds.schema().index_of(seg).expect("checked by build");
        let col = ds.frame(&test.rows).column(j);
        for b in 0..axis.n_bins() {
            let idx: Vec<usize> = (0..col.len()).filter(|&i| axis.bin(col[i]) == Some(b)).collect();
            segments.push(SegmentStat {
                bound: axis.bound(b),
                n: idx.len(),
                groups: groups.stats(&idx, &test.scores, config.threshold),
            });
        }
    }

    let acc = |scores: &[f64], t: f64| Metric::Acc.compute(&test.y, scores, t);
    let sorted = stats::sorted(&test.scores);
    let mut thresholds: Vec<f64> = (1..100).map(|k| stats::quantile_sorted(&sorted, k as f64 / 100.0)).collect();
    thresholds.dedup();
    let mut frontier: Vec<FrontierPoint> = thresholds
        .into_iter()
        .map(|t| FrontierPoint {
            option: DebiasOption::Threshold { threshold: t },
            min_air: groups.min_air(&all, &test.scores, t),
            accuracy: acc(&test.scores, t),
        })
        .collect();

    if let Some(feature) = &config.debias_feature {
        model.require_evaluable("de-bias binning")?;
        let schema = ds.schema();
        let j = schema.index_of(feature).ok_or_else(|| Error::MissingColumn(feature.clone()))?;
        if schema.features[j].kind != ColumnKind::Numeric {
            return Err(Error::invalid("debias_feature", "must be numeric"));
        }
        let train_col = ds.frame(&ds.train_rows()).column(j);
        let frame = ds.frame(&test.rows);
        for &bins in &config.debias_bins {
            if bins == 0 {
                return Err(Error::invalid("debias_bins", "bin counts must be positive"));
            }
            // replace values by the train mean of their quantile bin
            let edges = stats::quantile_edges(&train_col, bins);
            let k = edges.len().saturating_sub(1).max(1);
            let bin = |v: f64| edges[1..].partition_point(|e| *e < v).min(k - 1);
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for v in &train_col {
                sums[bin(*v)] += v;
                counts[bin(*v)] += 1;
            }
            let mut coarse = frame.clone();
            for i in 0..coarse.n_rows() {
                let b = bin(coarse.get(i, j));
                if counts[b] > 0 {
                    coarse.set(i, j, sums[b] / counts[b] as f64);
                }
            }
            let scores = predict_all(model, &coarse)?;
            frontier.push(FrontierPoint {
                option: DebiasOption::Binning { feature: feature.clone(), bins, threshold: config.threshold },
                min_air: groups.min_air(&all, &scores, config.threshold),
                accuracy: acc(&scores, config.threshold),
            });
        }
    }

    Ok(FairnessResult {
        config: config.clone(),
        reference: labels[reference].clone(),
        groups: stats_main,
        disparity,
        segments,
        frontier,
        warnings,
    })
}
