//! Second-order gradient boosting over binned features.
//!
//! Depth-1 trees (stumps) over supervised bins give a main-effects model;
//! depth-2 trees over quantile bins add pairwise tables. Every tree is
//! folded into an [`EffectRepresentation`] as it is grown.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::binning::{optimal_binning, quantile_binning};
use super::effects::{EffectRepresentation, FeatureBins, PurifyReport};
use super::TrainView;
use crate::data::{ColumnKind, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Xgb1Params {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    /// Minimum share of rows per supervised bin.
    pub min_bin_fraction: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
    /// Share of train carved out for early stopping; `None` disables it.
    pub validation_fraction: Option<f64>,
    pub patience: usize,
    pub seed: Option<u64>,
}

impl Default for Xgb1Params {
    fn default() -> Self {
        Xgb1Params {
            n_rounds: 500,
            learning_rate: 0.1,
            max_bins: 10,
            min_bin_fraction: 0.05,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
            validation_fraction: Some(0.2),
            patience: 20,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Xgb2Params {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
    pub validation_fraction: Option<f64>,
    pub patience: usize,
    pub purify: bool,
    pub seed: Option<u64>,
}

impl Default for Xgb2Params {
    fn default() -> Self {
        Xgb2Params {
            n_rounds: 500,
            learning_rate: 0.1,
            n_bins: 32,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
            validation_fraction: Some(0.2),
            patience: 20,
            purify: true,
            seed: None,
        }
    }
}

/// Settings shared by both depths.
#[derive(Debug, Clone, Copy)]
struct BoostConfig {
    depth: usize,
    n_rounds: usize,
    learning_rate: f64,
    reg_lambda: f64,
    min_child_weight: f64,
    validation_fraction: Option<f64>,
    patience: usize,
    seed: u64,
}

impl BoostConfig {
    fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.n_rounds > 100_000 {
            return Err(Error::invalid("n_rounds", "must lie in [1, 100000]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", "must lie in (0, 1]"));
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::invalid("reg_lambda", "must be finite and >= 0"));
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return Err(Error::invalid("min_child_weight", "must be finite and >= 0"));
        }
        if let Some(f) = self.validation_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
            }
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum BoostNode {
    Leaf { value: f64 },
    /// Left when the bin of `feature` is at most `bin`.
    Split { feature: usize, bin: usize, left: f64, right: f64 },
}

impl BoostNode {
    fn eval(&self, bins: &[usize]) -> f64 {
        match self {
            BoostNode::Leaf { value } => *value,
            BoostNode::Split { feature, bin, left, right } => {
                if bins[*feature] <= *bin {
                    *left
                } else {
                    *right
                }
            }
        }
    }
}

/// One boosted tree; values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTree {
    pub feature: usize,
    pub bin: usize,
    pub left: BoostNode,
    pub right: BoostNode,
}

impl BoostTree {
    pub fn eval(&self, bins: &[usize]) -> f64 {
        if bins[self.feature] <= self.bin {
            self.left.eval(bins)
        } else {
            self.right.eval(bins)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub depth: usize,
    pub task: TaskKind,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<BoostTree>,
    pub effects: EffectRepresentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purify_report: Option<PurifyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    /// Loss on the fitting rows after each round (index 0 is the base score).
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_rounds: usize,
}

fn loss_of(task: TaskKind, y: f64, margin: f64) -> f64 {
    match task {
        TaskKind::Regression => 0.5 * (y - margin) * (y - margin),
        TaskKind::Binary => {
            // log(1 + e^m) - y m, computed stably
            let softplus = if margin > 0.0 {
                margin + (-margin).exp().ln_1p()
            } else {
                margin.exp().ln_1p()
            };
            softplus - y * margin
        }
    }
}

fn grad_hess(task: TaskKind, y: f64, margin: f64) -> (f64, f64) {
    match task {
        TaskKind::Regression => (margin - y, 1.0),
        TaskKind::Binary => {
            let p = stats::sigmoid(margin);
            (p - y, (p * (1.0 - p)).max(1e-16))
        }
    }
}

/// Per-feature gradient/hessian histograms over bins.
struct Hist {
    g: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

impl Hist {
    fn build(binned: &[Vec<usize>], rows: &[usize], g: &[f64], h: &[f64], n_bins: &[usize]) -> Hist {
        let mut hg: Vec<Vec<f64>> = n_bins.iter().map(|n| vec![0.0; *n]).collect();
        let mut hh = hg.clone();
        for &r in rows {
            for (j, &b) in binned[r].iter().enumerate() {
                hg[j][b] += g[r];
                hh[j][b] += h[r];
            }
        }
        Hist { g: hg, h: hh }
    }
}

struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
    left: (f64, f64),
    right: (f64, f64),
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Best split over all features and bin thresholds; ties go to the lower
/// feature, then the lower bin.
fn best_split(hist: &Hist, cfg: &BoostConfig) -> Option<Split> {
    let mut best: Option<Split> = None;
    for (j, (gs, hs)) in hist.g.iter().zip(&hist.h).enumerate() {
        let gt: f64 = gs.iter().sum();
        let ht: f64 = hs.iter().sum();
        let parent = score(gt, ht, cfg.reg_lambda);
        let (mut gl, mut hl) = (0.0, 0.0);
        for b in 0..gs.len().saturating_sub(1) {
            gl += gs[b];
            hl += hs[b];
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl, cfg.reg_lambda) + score(gr, hr, cfg.reg_lambda) - parent);
            let tol = 1e-12 * parent.abs().max(1e-300);
            if best.as_ref().is_none_or(|s| gain > s.gain + tol) {
                best = Some(Split { feature: j, bin: b, gain, left: (gl, hl), right: (gr, hr) });
            }
        }
    }
    best
}

fn leaf_value(g: f64, h: f64, cfg: &BoostConfig) -> f64 {
    -g / (h + cfg.reg_lambda) * cfg.learning_rate
}

/// Ranks of level target means, ties broken by level code.
fn categorical_bins(codes: &[f64], y: &[f64], n_levels: usize) -> Vec<usize> {
    let mut sums = vec![0.0; n_levels];
    let mut counts = vec![0usize; n_levels];
    for (c, t) in codes.iter().zip(y) {
        sums[*c as usize] += t;
        counts[*c as usize] += 1;
    }
    let overall = stats::mean(y);
    let means: Vec<f64> = (0..n_levels)
        .map(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { overall })
        .collect();
    let mut order: Vec<usize> = (0..n_levels).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut bins = vec![0; n_levels];
    for (rank, level) in order.into_iter().enumerate() {
        bins[level] = rank;
    }
    bins
}

enum Binner {
    Optimal { max_bins: usize, min_fraction: f64 },
    Quantile { n_bins: usize },
}

fn make_bins(view: &TrainView, binner: &Binner) -> Result<Vec<FeatureBins>> {
    view.schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let col = view.x.column(j);
            Ok(match f.kind {
                ColumnKind::Categorical => FeatureBins::Categorical {
                    level_bins: categorical_bins(&col, &view.y, f.levels.len()),
                },
                ColumnKind::Numeric => FeatureBins::Numeric {
                    edges: match binner {
                        Binner::Optimal { max_bins, min_fraction } => {
                            optimal_binning(&col, &view.y, *max_bins, *min_fraction)?
                        }
                        Binner::Quantile { n_bins } => quantile_binning(&col, *n_bins)?,
                    },
                },
            })
        })
        .collect()
}

/// Fold one tree into the effect tables.
fn accumulate(effects: &mut EffectRepresentation, tree: &BoostTree) {
    let f = tree.feature;
    let nf = effects.bins[f].n_bins();
    for (side, node) in [(0, &tree.left), (1, &tree.right)] {
        let in_side = |b: usize| if side == 0 { b <= tree.bin } else { b > tree.bin };
        match node {
            BoostNode::Leaf { value } => {
                for b in (0..nf).filter(|b| in_side(*b)) {
                    effects.mains[f][b] += value;
                }
            }
            BoostNode::Split { feature: g, bin, left, right } if *g == f => {
                for b in (0..nf).filter(|b| in_side(*b)) {
                    effects.mains[f][b] += if b <= *bin { left } else { right };
                }
            }
            BoostNode::Split { feature: g, bin, left, right } => {
                let pi = effects.pair_index(f, *g);
                let ng = effects.bins[*g].n_bins();
                let pair = &mut effects.pairs[pi];
                let f_first = pair.features[0] == f;
                for bf in (0..nf).filter(|b| in_side(*b)) {
                    for bg in 0..ng {
                        let v = if bg <= *bin { left } else { right };
                        let cell = if f_first { bf * ng + bg } else { bg * nf + bf };
                        pair.values[cell] += v;
                    }
                }
            }
        }
    }
}

struct Booster {
    cfg: BoostConfig,
    binned: Vec<Vec<usize>>,
    n_bins: Vec<usize>,
}

impl Booster {
    fn grow_child(&self, rows: &[usize], g: &[f64], h: &[f64], side: (f64, f64)) -> BoostNode {
        if self.cfg.depth >= 2 {
            let hist = Hist::build(&self.binned, rows, g, h, &self.n_bins);
            if let Some(s) = best_split(&hist, &self.cfg) {
                if s.gain > 1e-12 * score(side.0, side.1, self.cfg.reg_lambda).max(1e-300) {
                    return BoostNode::Split {
                        feature: s.feature,
                        bin: s.bin,
                        left: leaf_value(s.left.0, s.left.1, &self.cfg),
                        right: leaf_value(s.right.0, s.right.1, &self.cfg),
                    };
                }
            }
        }
        BoostNode::Leaf { value: leaf_value(side.0, side.1, &self.cfg) }
    }

    fn grow(&self, rows: &[usize], g: &[f64], h: &[f64]) -> Option<BoostTree> {
        let hist = Hist::build(&self.binned, rows, g, h, &self.n_bins);
        let root = best_split(&hist, &self.cfg)?;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.binned[r][root.feature] <= root.bin);
        let left = self.grow_child(&left_rows, g, h, root.left);
        let right = self.grow_child(&right_rows, g, h, root.right);
        let tree = BoostTree { feature: root.feature, bin: root.bin, left, right };
        // a tree that moves no row is the end of useful boosting
        let moves = rows.iter().any(|&r| tree.eval(&self.binned[r]).abs() > 0.0);
        moves.then_some(tree)
    }
}

impl BoostModel {
    pub fn fit_xgb1(view: &TrainView, params: &Xgb1Params) -> Result<(BoostModel, BoostTrace)> {
        if params.max_bins < 2 {
            return Err(Error::invalid("max_bins", "must be at least 2"));
        }
        let cfg = BoostConfig {
            depth: 1,
            n_rounds: params.n_rounds,
            learning_rate: params.learning_rate,
            reg_lambda: params.reg_lambda,
            min_child_weight: params.min_child_weight,
            validation_fraction: params.validation_fraction,
            patience: params.patience,
            seed: params.seed.unwrap_or(0),
        };
        let binner = Binner::Optimal { max_bins: params.max_bins, min_fraction: params.min_bin_fraction };
        Self::fit(view, cfg, binner, false)
    }

    pub fn fit_xgb2(view: &TrainView, params: &Xgb2Params) -> Result<(BoostModel, BoostTrace)> {
        if params.n_bins < 2 || params.n_bins > 1024 {
            return Err(Error::invalid("n_bins", "must lie in [2, 1024]"));
        }
        let cfg = BoostConfig {
            depth: 2,
            n_rounds: params.n_rounds,
            learning_rate: params.learning_rate,
            reg_lambda: params.reg_lambda,
            min_child_weight: params.min_child_weight,
            validation_fraction: params.validation_fraction,
            patience: params.patience,
            seed: params.seed.unwrap_or(0),
        };
        Self::fit(view, cfg, Binner::Quantile { n_bins: params.n_bins }, params.purify)
    }

    fn fit(view: &TrainView, cfg: BoostConfig, binner: Binner, purify: bool) -> Result<(BoostModel, BoostTrace)> {
        cfg.validate()?;
        let task = view.task;
        let bins = make_bins(view, &binner)?;
        let n = view.y.len();
        let binned: Vec<Vec<usize>> = (0..n)
            .map(|i| bins.iter().enumerate().map(|(j, b)| b.bin(view.x.get(i, j))).collect())
            .collect();
        let n_bins: Vec<usize> = bins.iter().map(FeatureBins::n_bins).collect();

        let mut all: Vec<usize> = (0..n).collect();
        let (fit_rows, val_rows) = match cfg.validation_fraction {
            Some(frac) if n >= 10 => {
                all.shuffle(&mut rng_for(cfg.seed, &[stream::CARVE]));
                let n_val = stats::round_count(frac * n as f64).clamp(1, n - 1);
                let (val, fit) = all.split_at(n_val);
                let mut fit = fit.to_vec();
                let mut val = val.to_vec();
                fit.sort_unstable();
                val.sort_unstable();
                (fit, val)
            }
            _ => (all, Vec::new()),
        };

        let fit_y: Vec<f64> = fit_rows.iter().map(|&r| view.y[r]).collect();
        let base_score = match task {
            TaskKind::Regression => stats::mean(&fit_y),
            TaskKind::Binary => stats::logit(stats::mean(&fit_y)),
        };
        let booster = Booster { cfg, binned, n_bins };
        let mut margin = vec![base_score; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mean_loss = |rows: &[usize], margin: &[f64]| {
            rows.iter().map(|&r| loss_of(task, view.y[r], margin[r])).sum::<f64>() / rows.len().max(1) as f64
        };
        let mut trace = BoostTrace {
            train_loss: vec![mean_loss(&fit_rows, &margin)],
            validation_loss: if val_rows.is_empty() { Vec::new() } else { vec![mean_loss(&val_rows, &margin)] },
            best_rounds: 0,
        };
        let mut trees = Vec::new();
        let mut best = (trace.validation_loss.first().copied().unwrap_or(f64::INFINITY), 0usize);
        for round in 1..=cfg.n_rounds {
            for &r in &fit_rows {
                let (gi, hi) = grad_hess(task, view.y[r], margin[r]);
                g[r] = gi;
                h[r] = hi;
            }
            let Some(tree) = booster.grow(&fit_rows, &g, &h) else { break };
            for (r, m) in margin.iter_mut().enumerate() {
                *m += tree.eval(&booster.binned[r]);
            }
            trees.push(tree);
            trace.train_loss.push(mean_loss(&fit_rows, &margin));
            if !val_rows.is_empty() {
                let vl = mean_loss(&val_rows, &margin);
                trace.validation_loss.push(vl);
                if vl < best.0 {
                    best = (vl, round);
                } else if round - best.1 >= cfg.patience {
                    break;
                }
            }
        }
        let keep = if val_rows.is_empty() { trees.len() } else { best.1 };
        trees.truncate(keep);
        trace.best_rounds = keep;

        let mut effects = EffectRepresentation::new(base_score, bins);
        for t in &trees {
            accumulate(&mut effects, t);
        }
        effects.set_weights(view.x.rows());
        let mut model = BoostModel {
            depth: cfg.depth,
            task,
            base_score,
            learning_rate: cfg.learning_rate,
            trees,
            effects,
            purify_report: None,
        };
        if purify {
            model.purify()?;
        }
        Ok((model, trace))
    }

    pub fn purify(&mut self) -> Result<PurifyReport> {
        let report = self.effects.purify()?;
        self.purify_report = Some(report.clone());
        Ok(report)
    }

    /// Margin from the effect tables.
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.effects.margin(row)
    }

    /// Margin from summing the stored trees.
    pub fn ensemble_margin(&self, row: &[f64]) -> f64 {
        let bins = self.effects.bin_row(row);
        self.base_score + self.trees.iter().map(|t| t.eval(&bins)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.task {
            TaskKind::Regression => self.margin(row),
            TaskKind::Binary => stats::sigmoid(self.margin(row)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Dataset};

    fn product_view(n_side: usize) -> TrainView {
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                x1.push(i as f64 / (n_side - 1) as f64);
                x2.push(j as f64 / (n_side - 1) as f64);
            }
        }
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a * b).collect();
        let ds = Dataset::new(
            "p",
            vec![Column::numeric("x1", x1), Column::numeric("x2", x2), Column::numeric("y", y)],
            "y",
            TaskKind::Regression,
        )
        .unwrap();
        TrainView::from_dataset(&ds).unwrap()
    }

    #[test]
    fn xgb2_learns_interaction_table() {
        let view = product_view(20);
        let (m, trace) = BoostModel::fit_xgb2(&view, &Xgb2Params::default()).unwrap();
        let pair = m.effects.pair(0, 1).expect("pair table");
        assert!(pair.values.iter().any(|v| v.abs() > 1e-6));
        assert!(m.trees.iter().any(|t| matches!(&t.left, BoostNode::Split { feature, .. } if *feature != t.feature)
            || matches!(&t.right, BoostNode::Split { feature, .. } if *feature != t.feature)));
        let base_mse = stats::population_variance(&view.y);
        let mse = (0..view.y.len()).map(|i| (m.predict_row(view.x.row(i)) - view.y[i]).powi(2)).sum::<f64>() / view.y.len() as f64;
        assert!(mse < base_mse);
        assert!(m.effects.purified);
        assert!(trace.best_rounds > 0);
    }

    #[test]
    fn effect_sum_matches_ensemble() {
        let view = product_view(15);
        let (m, _) = BoostModel::fit_xgb2(&view, &Xgb2Params { purify: false, ..Default::default() }).unwrap();
        for i in 0..view.y.len() {
            let r = view.x.row(i);
            assert!((m.margin(r) - m.ensemble_margin(r)).abs() < 1e-10);
        }
        let (p, _) = BoostModel::fit_xgb2(&view, &Xgb2Params::default()).unwrap();
        assert!(p.effects.max_marginal() <= 1e-8);
        for i in 0..view.y.len() {
            let r = view.x.row(i);
            assert!((p.margin(r) - m.margin(r)).abs() < 1e-10);
        }
    }

    #[test]
    fn training_loss_never_increases() {
        let view = product_view(12);
        for lr in [0.1, 0.3, 0.5] {
            let params = Xgb1Params { learning_rate: lr, validation_fraction: None, n_rounds: 100, ..Default::default() };
            let (m, trace) = BoostModel::fit_xgb1(&view, &params).unwrap();
            assert!(m.effects.pairs.is_empty());
            for w in trace.train_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn binary_boosting_stays_in_unit_interval() {
        let n = 300;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let g: Vec<&str> = (0..n).map(|i| ["u", "v", "w"][i % 3]).collect();
        let y: Vec<f64> = (0..n).map(|i| f64::from(x[i] + if i % 3 == 0 { 0.3 } else { 0.0 } > 0.6)).collect();
        let ds = Dataset::new(
            "b",
            vec![Column::numeric("x", x), Column::categorical("g", &g), Column::numeric("y", y)],
            "y",
            TaskKind::Binary,
        )
        .unwrap();
        let view = TrainView::from_dataset(&ds).unwrap();
        let (m, trace) = BoostModel::fit_xgb1(&view, &Xgb1Params { validation_fraction: None, n_rounds: 60, learning_rate: 0.5, ..Default::default() }).unwrap();
        for w in trace.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for i in 0..n {
            let p = m.predict_row(view.x.row(i));
            assert!((0.0..=1.0).contains(&p));
        }
        // unseen level code still predicts
        assert!(m.predict_row(&[0.5, 7.0]).is_finite());
    }
}
