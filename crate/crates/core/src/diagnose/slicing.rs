//! 1D and 2D slicing for the weak-spot and overfit/underfit tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extended_float, Scored};
use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{Metric, DEFAULT_THRESHOLD};
use crate::models::TrainedModel;
use crate::stats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMethod {
    Uniform,
    #[default]
    Quantile,
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    /// One or two slicing features.
    pub features: Vec<String>,
    #[serde(default)]
    pub method: BinMethod,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Defaults to `max(20, ceil(1% of dataset rows))`.
    #[serde(default)]
    pub min_samples: Option<usize>,
}

impl SliceSpec {
    pub fn one(feature: impl Into<String>, bins: usize) -> SliceSpec {
        SliceSpec { features: vec![feature.into()], method: BinMethod::Quantile, bins, min_samples: None }
    }

    pub fn two(first: impl Into<String>, second: impl Into<String>, bins: usize) -> SliceSpec {
        SliceSpec { features: vec![first.into(), second.into()], ..SliceSpec::one("", bins) }
    }

    pub fn min_samples_for(&self, n_rows: usize) -> usize {
        self.min_samples.unwrap_or_else(|| 20.max((n_rows as f64 / 100.0).ceil() as usize))
    }
}

/// Binning of one slicing feature. Numeric bin `k` covers
/// `(edges[k], edges[k+1]]`, and the first bin also holds `edges[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceAxis {
    Numeric { feature: String, edges: Vec<f64> },
    Levels { feature: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceBound {
    Interval { feature: String, lower: f64, upper: f64, includes_lower: bool },
    Level { feature: String, level: String },
}

impl SliceAxis {
    /// Edges come from every row of the dataset so both splits share them.
    pub fn build(ds: &Dataset, feature: &str, method: BinMethod, bins: usize) -> Result<SliceAxis> {
        let schema = ds.schema();
        let j = schema.index_of(feature).ok_or_else(|| Error::MissingColumn(feature.into()))?;
        let info = &schema.features[j];
        if info.kind == ColumnKind::Categorical {
            return Ok(SliceAxis::Levels { feature: feature.into(), levels: info.levels.clone() });
        }
        let values: Vec<f64> = ds.frame(&ds.all_rows()).column(j).into_iter().filter(|v| v.is_finite()).collect();
        if values.is_empty() {
            return Err(Error::data(format!("feature `{feature}` has no observed values")));
        }
        let edges = match method {
            BinMethod::Quantile => stats::quantile_edges(&values, bins),
            BinMethod::Uniform => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    vec![lo]
                } else {
                    let mut e: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
                    e[bins] = hi;
                    e
                }
            }
        };
        Ok(SliceAxis::Numeric { feature: feature.into(), edges })
    }

    pub fn feature(&self) -> &str {
        match self {
            SliceAxis::Numeric { feature, .. } | SliceAxis::Levels { feature, .. } => feature,
        }
    }

    pub fn n_bins(&self) -> usize {
        match self {
            SliceAxis::Numeric { edges, .. } => edges.len().saturating_sub(1).max(1),
            SliceAxis::Levels { levels, .. } => levels.len().max(1),
        }
    }

    /// Bin of an encoded feature value; `None` for missing values.
    pub fn bin(&self, v: f64) -> Option<usize> {
        if !v.is_finite() {
            return None;
        }
        match self {
            SliceAxis::Numeric { edges, .. } => {
                let k = self.n_bins();
                Some(edges[1..].partition_point(|e| *e < v).min(k - 1))
            }
            SliceAxis::Levels { .. } => Some(v as usize),
        }
    }

    pub fn bound(&self, b: usize) -> SliceBound {
        match self {
            SliceAxis::Numeric { feature, edges } => SliceBound::Interval {
                feature: feature.clone(),
                lower: edges[b],
                upper: edges[(b + 1).min(edges.len() - 1)],
                includes_lower: b == 0,
            },
            SliceAxis::Levels { feature, levels } => SliceBound::Level {
                feature: feature.clone(),
                level: levels.get(b).cloned().unwrap_or_default(),
            },
        }
    }
}

struct Slicer {
    axes: Vec<SliceAxis>,
    cols: Vec<usize>,
}

impl Slicer {
    fn new(ds: &Dataset, spec: &SliceSpec) -> Result<Slicer> {
        if spec.features.is_empty() || spec.features.len() > 2 {
            return Err(Error::invalid("slice.features", "give one or two slicing features"));
        }
        if spec.features.len() == 2 && spec.features[0] == spec.features[1] {
            return Err(Error::invalid("slice.features", "the two slicing features must differ"));
        }
        if spec.bins == 0 {
            return Err(Error::invalid("slice.bins", "must be positive"));
        }
        let schema = ds.schema();
        let mut axes = Vec::new();
        let mut cols = Vec::new();
        for f in &spec.features {
            axes.push(SliceAxis::build(ds, f, spec.method, spec.bins)?);
            cols.push(schema.index_of(f).expect("checked by build"));
        }
        Ok(Slicer { axes, cols })
    }

    fn n_cells(&self) -> usize {
        self.axes.iter().map(SliceAxis::n_bins).product()
    }

    fn cell_bins(&self, cell: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![cell],
            _ => {
                let n1 = self.axes[1].n_bins();
                vec![cell / n1, cell % n1]
            }
        }
    }

    fn bounds(&self, cell: usize) -> Vec<SliceBound> {
        self.axes.iter().zip(self.cell_bins(cell)).map(|(a, b)| a.bound(b)).collect()
    }

    /// Positions (into `rows`) belonging to each cell, in row order.
    fn members(&self, ds: &Dataset, rows: &[usize]) -> Vec<Vec<usize>> {
        let frame = ds.frame(rows);
        let mut out = vec![Vec::new(); self.n_cells()];
        'rows: for (i, r) in frame.rows().enumerate() {
            let mut cell = 0;
            for (a, &j) in self.axes.iter().zip(&self.cols) {
                match a.bin(r[j]) {
                    Some(b) if b < a.n_bins() => cell = cell * a.n_bins() + b,
                    _ => continue 'rows,
                }
            }
            out[cell].push(i);
        }
        out
    }
}

fn metric_on(metric: Metric, s: &Scored, idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let (y, p) = s.subset(idx);
    metric.compute(&y, &p, DEFAULT_THRESHOLD)
}

fn overall(metric: Metric, s: &Scored, split: &str) -> Result<f64> {
    metric
        .compute(&s.y, &s.scores, DEFAULT_THRESHOLD)
        .ok_or_else(|| Error::data(format!("{metric} is undefined on the {split} split")))
}

fn default_ratio() -> f64 {
    1.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakspotConfig {
    pub slice: SliceSpec,
    /// A slice is weak when its metric is at least this multiple of the
    /// overall test metric.
    #[serde(default = "default_ratio")]
    pub threshold: f64,
    /// Loss-type metric; defaults to MSE (regression) or LogLoss (binary).
    #[serde(default)]
    pub metric: Option<Metric>,
}

impl WeakspotConfig {
    pub fn new(slice: SliceSpec) -> WeakspotConfig {
        WeakspotConfig { slice, threshold: default_ratio(), metric: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStat {
    /// Bin index along each slicing feature.
    pub bins: Vec<usize>,
    pub bounds: Vec<SliceBound>,
    pub n: usize,
    pub metric: Option<f64>,
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakRegion {
    /// Indices into `slices` covered by the region.
    pub slices: Vec<usize>,
    pub bounds: Vec<SliceBound>,
    pub n: usize,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakspotResult {
    pub config: WeakspotConfig,
    pub metric: Metric,
    pub overall: f64,
    pub min_samples: usize,
    pub axes: Vec<SliceAxis>,
    pub slices: Vec<SliceStat>,
    pub regions: Vec<WeakRegion>,
}

/// Test-split slices whose residual metric is well above the overall
/// level. A slice is weak iff its metric is positive, at least
/// `threshold * overall`, and it holds at least `min_samples` rows.
/// Adjacent weak bins of a single numeric feature merge into regions.
pub fn weakspot(model: &TrainedModel, ds: &Dataset, config: &WeakspotConfig) -> Result<WeakspotResult> {
    let metric = config.metric.unwrap_or(Metric::residual(ds.task));
    metric.check_task(ds.task)?;
    if !metric.is_loss() {
        return Err(Error::invalid("metric", "weak-spot detection needs a loss-type metric"));
    }
    if !(config.threshold.is_finite() && config.threshold > 0.0) {
        return Err(Error::invalid("threshold", "must be a positive number"));
    }
    let slicer = Slicer::new(ds, &config.slice)?;
    let test = Scored::new(model, ds, ds.test_rows())?;
    let overall = overall(metric, &test, "test")?;
    let min_samples = config.slice.min_samples_for(ds.n_rows());
    let members = slicer.members(ds, &test.rows);
    let slices: Vec<SliceStat> = members
        .par_iter()
        .enumerate()
        .map(|(c, idx)| {
            let m = metric_on(metric, &test, idx);
            SliceStat {
                bins: slicer.cell_bins(c),
                bounds: slicer.bounds(c),
                n: idx.len(),
                metric: m,
                weak: idx.len() >= min_samples && m.is_some_and(|v| v > 0.0 && v >= config.threshold * overall),
            }
        })
        .collect();

    let numeric_1d = slicer.axes.len() == 1 && matches!(slicer.axes[0], SliceAxis::Numeric { .. });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (c, s) in slices.iter().enumerate() {
        if !s.weak {
            continue;
        }
        match groups.last_mut() {
            Some(g) if numeric_1d && *g.last().unwrap() + 1 == c => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let regions = groups
        .into_iter()
        .map(|g| {
            let mut idx: Vec<usize> = g.iter().flat_map(|&c| members[c].iter().copied()).collect();
            idx.sort_unstable();
            let bounds = if numeric_1d && g.len() > 1 {
                let (SliceBound::Interval { feature, lower, includes_lower, .. }, SliceBound::Interval { upper, .. }) =
                    (&slices[g[0]].bounds[0], &slices[*g.last().unwrap()].bounds[0])
                else {
                    unreachable!("numeric axes produce interval bounds")
                };
                vec![SliceBound::Interval { feature: feature.clone(), lower: *lower, upper: *upper, includes_lower: *includes_lower }]
            } else {
                slices[g[0]].bounds.clone()
            };
            WeakRegion { n: idx.len(), metric: metric_on(metric, &test, &idx), slices: g, bounds }
        })
        .collect();

    let mut config = config.clone();
    config.metric = Some(metric);
    Ok(WeakspotResult { config, metric, overall, min_samples, axes: slicer.axes, slices, regions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverfitConfig {
    pub slice: SliceSpec,
    /// Gap threshold; defaults to half the overall train metric.
    #[serde(default, with = "extended_float")]
    pub delta: Option<f64>,
    /// Defaults to MSE (regression) or LogLoss (binary).
    #[serde(default)]
    pub metric: Option<Metric>,
}

impl OverfitConfig {
    pub fn new(slice: SliceSpec) -> OverfitConfig {
        OverfitConfig { slice, delta: None, metric: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitSlice {
    pub bins: Vec<usize>,
    pub bounds: Vec<SliceBound>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_metric: Option<f64>,
    pub test_metric: Option<f64>,
    /// Test minus train for losses, train minus test for scores, so a
    /// positive gap always means worse on unseen data.
    pub gap: Option<f64>,
    /// Below the minimum sample count in either split.
    pub skipped: bool,
    pub overfit: bool,
    pub underfit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitResult {
    pub config: OverfitConfig,
    pub metric: Metric,
    #[serde(with = "extended_float")]
    pub delta: Option<f64>,
    pub train_overall: f64,
    pub test_overall: f64,
    pub min_samples: usize,
    pub axes: Vec<SliceAxis>,
    pub slices: Vec<OverfitSlice>,
}

/// Per-slice train/test gap. Overfit where `gap >= delta`, underfit where
/// `gap <= -delta`.
pub fn overfit_underfit(model: &TrainedModel, ds: &Dataset, config: &OverfitConfig) -> Result<OverfitResult> {
    let metric = config.metric.unwrap_or(Metric::residual(ds.task));
    metric.check_task(ds.task)?;
    let slicer = Slicer::new(ds, &config.slice)?;
    let train = Scored::new(model, ds, ds.train_rows())?;
    let test = Scored::new(model, ds, ds.test_rows())?;
    let train_overall = overall(metric, &train, "train")?;
    let test_overall = overall(metric, &test, "test")?;
    let delta = match config.delta {
        Some(d) if d.is_nan() || d < 0.0 => return Err(Error::invalid("delta", "must be non-negative")),
        Some(d) => d,
        None => (0.5 * train_overall.abs()).max(1e-12),
    };
    let min_samples = config.slice.min_samples_for(ds.n_rows());
    let train_members = slicer.members(ds, &train.rows);
    let test_members = slicer.members(ds, &test.rows);
    let slices = (0..slicer.n_cells())
        .into_par_iter()
        .map(|c| {
            let (tr, te) = (&train_members[c], &test_members[c]);
            let train_metric = metric_on(metric, &train, tr);
            let test_metric = metric_on(metric, &test, te);
            let skipped = tr.len() < min_samples || te.len() < min_samples;
            let gap = match (train_metric, test_metric) {
                (Some(a), Some(b)) => Some(if metric.is_loss() { b - a } else { a - b }),
                _ => None,
            };
            let live = if skipped { None } else { gap };
            OverfitSlice {
                bins: slicer.cell_bins(c),
                bounds: slicer.bounds(c),
                n_train: tr.len(),
                n_test: te.len(),
                train_metric,
                test_metric,
                gap,
                skipped,
                overfit: live.is_some_and(|g| g >= delta),
                underfit: live.is_some_and(|g| g <= -delta),
            }
        })
        .collect();
    let mut config = config.clone();
    config.metric = Some(metric);
    Ok(OverfitResult {
        config,
        metric,
        delta: Some(delta),
        train_overall,
        test_overall,
        min_samples,
        axes: slicer.axes,
        slices,
    })
}
