//! Additive model with cubic B-spline shape functions and a second-order
//! difference penalty.
//!
//! Every basis column is centered by its train mean so each fitted shape
//! function has zero train mean; the level offsets of categorical features
//! are centered the same way. Regression solves the penalized normal
//! equations directly, binary targets use penalized IRLS.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainView;
use crate::data::{ColumnKind, Frame, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::stats;

const DEGREE: usize = 3;
const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
/// Ridge added to every non-intercept coefficient; only there to pin down the
/// directions the centering constraint leaves unidentified.
const IDENTIFIABILITY_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GamParams {
    /// Smoothing penalty; `None` selects it from the validation grid.
    pub lambda: Option<f64>,
    /// Interior knots per numeric feature.
    pub n_knots: usize,
    pub validation_fraction: f64,
    /// Seed of the validation carve-out; falls back to the training seed.
    pub seed: Option<u64>,
    pub max_irls: usize,
}

impl Default for GamParams {
    fn default() -> Self {
        GamParams {
            lambda: None,
            n_knots: 8,
            validation_fraction: 0.2,
            seed: None,
            max_irls: 50,
        }
    }
}

impl GamParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::invalid("lambda", "must be finite and >= 0"));
            }
        }
        if !(1..=50).contains(&self.n_knots) {
            return Err(Error::invalid("n_knots", "must lie in [1, 50]"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
        }
        if self.max_irls == 0 {
            return Err(Error::invalid("max_irls", "must be positive"));
        }
        Ok(())
    }
}

/// Clamped cubic B-spline basis on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    /// Full knot vector including the repeated boundary knots.
    pub knots: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl SplineBasis {
    pub fn from_values(values: &[f64], n_knots: usize) -> Self {
        let s = stats::sorted(values);
        let lower = s[0];
        let upper = s[s.len() - 1];
        let mut interior: Vec<f64> = (1..=n_knots)
            .map(|k| stats::quantile_sorted(&s, k as f64 / (n_knots + 1) as f64))
            .filter(|&q| q > lower && q < upper)
            .collect();
        interior.dedup();
        let mut knots = vec![lower; DEGREE + 1];
        knots.extend(interior);
        knots.extend(std::iter::repeat_n(upper, DEGREE + 1));
        SplineBasis { knots, lower, upper }
    }

    pub fn len(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Basis values at `x` (clamped to the training range), via Cox-de Boor.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let m = self.len();
        let t = &self.knots;
        if self.upper <= self.lower {
            let mut b = vec![0.0; m];
            b[0] = 1.0;
            return b;
        }
        let x = x.clamp(self.lower, self.upper);
        // degree-0 indicators over knot spans, right end closed on the last span
        let spans = t.len() - 1;
        let mut n: Vec<f64> = (0..spans)
            .map(|i| {
                let inside = if x == self.upper {
                    t[i] < t[i + 1] && t[i + 1] == self.upper
                } else {
                    t[i] <= x && x < t[i + 1]
                };
                f64::from(inside)
            })
            .collect();
        for d in 1..=DEGREE {
            for i in 0..spans - d {
                let left = if t[i + d] > t[i] {
                    (x - t[i]) / (t[i + d] - t[i]) * n[i]
                } else {
                    0.0
                };
                let right = if t[i + d + 1] > t[i + 1] {
                    (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * n[i + 1]
                } else {
                    0.0
                };
                n[i] = left + right;
            }
        }
        n.truncate(m);
        n
    }
}

/// Second-order difference penalty `D'D` of size `m x m`.
pub fn difference_penalty(m: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(m, m);
    if m < 3 {
        return s;
    }
    for r in 0..m - 2 {
        let d = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
        for &(a, va) in &d {
            for &(b, vb) in &d {
                s[(a, b)] += va * vb;
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum GamTerm {
    Spline {
        feature: usize,
        basis: SplineBasis,
        coefficients: Vec<f64>,
        /// Train means of the basis columns (the centering shift).
        column_means: Vec<f64>,
        train_variance: f64,
    },
    Levels {
        feature: usize,
        /// Centered offset per level code.
        offsets: Vec<f64>,
        train_variance: f64,
    },
}

impl GamTerm {
    pub fn feature(&self) -> usize {
        match self {
            GamTerm::Spline { feature, .. } | GamTerm::Levels { feature, .. } => *feature,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GamTerm::Spline {
                basis,
                coefficients,
                column_means,
                ..
            } => basis
                .eval(x)
                .iter()
                .zip(coefficients)
                .zip(column_means)
                .map(|((b, c), m)| c * (b - m))
                .sum(),
            GamTerm::Levels { offsets, .. } => offsets.get(x as usize).copied().unwrap_or(0.0),
        }
    }

    pub fn train_variance(&self) -> f64 {
        match self {
            GamTerm::Spline { train_variance, .. } | GamTerm::Levels { train_variance, .. } => {
                *train_variance
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub intercept: f64,
    pub lambda: f64,
    pub terms: Vec<GamTerm>,
    pub task: TaskKind,
    /// Validation loss per grid point when lambda was selected automatically.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_search: Vec<[f64; 2]>,
    /// Residual sum of squares (regression) or deviance (binary) on train.
    pub train_loss: f64,
    /// Sum of `c' D'D c` over spline terms.
    pub roughness: f64,
}

/// Per-feature block layout of the design.
enum BlockKind {
    Spline(SplineBasis),
    Levels(usize),
}

struct Block {
    feature: usize,
    kind: BlockKind,
    offset: usize,
    width: usize,
}

struct Layout {
    blocks: Vec<Block>,
    width: usize,
}

impl Layout {
    fn new(view: &TrainView, rows: &[usize], n_knots: usize) -> Layout {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (j, f) in view.schema.features.iter().enumerate() {
            let kind = match f.kind {
                ColumnKind::Numeric => {
                    let vals: Vec<f64> = rows.iter().map(|&r| view.x.get(r, j)).collect();
                    BlockKind::Spline(SplineBasis::from_values(&vals, n_knots))
                }
                ColumnKind::Categorical => BlockKind::Levels(f.levels.len()),
            };
            let width = match &kind {
                BlockKind::Spline(b) => b.len(),
                BlockKind::Levels(k) => *k,
            };
            blocks.push(Block {
                feature: j,
                kind,
                offset,
                width,
            });
            offset += width;
        }
        Layout {
            blocks,
            width: offset,
        }
    }

    fn raw_row(&self, row: &[f64], out: &mut [f64]) {
        for b in &self.blocks {
            let x = row[b.feature];
            match &b.kind {
                BlockKind::Spline(basis) => {
                    out[b.offset..b.offset + b.width].copy_from_slice(&basis.eval(x));
                }
                BlockKind::Levels(_) => {
                    out[b.offset..b.offset + b.width].fill(0.0);
                    let k = x as usize;
                    if k < b.width {
                        out[b.offset + k] = 1.0;
                    }
                }
            }
        }
    }

    fn matrix(&self, x: &Frame, rows: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows.len(), self.width);
        let mut buf = vec![0.0; self.width];
        for (i, &r) in rows.iter().enumerate() {
            self.raw_row(x.row(r), &mut buf);
            for (k, v) in buf.iter().enumerate() {
                m[(i, k)] = *v;
            }
        }
        m
    }

    fn penalty(&self, lambda: f64, n: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.width, self.width);
        for b in &self.blocks {
            if let BlockKind::Spline(_) = b.kind {
                let s = difference_penalty(b.width);
                p.view_mut((b.offset, b.offset), (b.width, b.width))
                    .copy_from(&(s * lambda));
            }
        }
        for k in 0..self.width {
            p[(k, k)] += IDENTIFIABILITY_RIDGE * n as f64;
        }
        p
    }

    fn roughness(&self, coef: &[f64]) -> f64 {
        self.blocks
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Spline(_)))
            .map(|b| {
                let c = DVector::from_column_slice(&coef[b.offset..b.offset + b.width]);
                (c.transpose() * difference_penalty(b.width) * &c)[(0, 0)]
            })
            .sum()
    }
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular penalized system".into()))
}

struct Fit {
    intercept: f64,
    coef: Vec<f64>,
    means: Vec<f64>,
}

fn fit_once(
    view: &TrainView,
    layout: &Layout,
    rows: &[usize],
    lambda: f64,
    max_irls: usize,
) -> Result<Fit> {
    let n = rows.len();
    let mut x = layout.matrix(&view.x, rows);
    let means: Vec<f64> = (0..layout.width).map(|k| x.column(k).mean()).collect();
    for k in 0..layout.width {
        let m = means[k];
        x.column_mut(k).add_scalar_mut(-m);
    }
    let y = DVector::from_iterator(n, rows.iter().map(|&r| view.y[r]));
    let penalty = layout.penalty(lambda, n);
    match view.task {
        TaskKind::Regression => {
            let ybar = y.mean();
            let yc = y.add_scalar(-ybar);
            let a = x.transpose() * &x + &penalty;
            let b = x.transpose() * yc;
            let c = solve_spd(a, b)?;
            Ok(Fit {
                intercept: ybar,
                coef: c.iter().copied().collect(),
                means,
            })
        }
        TaskKind::Binary => {
            // [1 | X] with the intercept unpenalized.
            let p = layout.width + 1;
            let mut a_mat = DMatrix::zeros(n, p);
            a_mat.column_mut(0).fill(1.0);
            a_mat.view_mut((0, 1), (n, layout.width)).copy_from(&x);
            let mut full_pen = DMatrix::zeros(p, p);
            full_pen.view_mut((1, 1), (layout.width, layout.width)).copy_from(&penalty);
            let ybar = y.mean();
            let mut theta = DVector::zeros(p);
            theta[0] = stats::logit(ybar);
            for _ in 0..max_irls {
                let eta = &a_mat * &theta;
                let mut w = DVector::zeros(n);
                let mut z = DVector::zeros(n);
                for i in 0..n {
                    let pr = stats::sigmoid(eta[i]);
                    let wi = (pr * (1.0 - pr)).max(1e-6);
                    w[i] = wi;
                    z[i] = eta[i] + (y[i] - pr) / wi;
                }
                let mut aw = a_mat.clone();
                for i in 0..n {
                    aw.row_mut(i).scale_mut(w[i]);
                }
                let lhs = a_mat.transpose() * &aw + &full_pen;
                let rhs = aw.transpose() * &z;
                let next = solve_spd(lhs, rhs)?;
                let change = (&next - &theta).amax();
                theta = next;
                if !change.is_finite() {
                    return Err(Error::Numerical("GAM IRLS diverged".into()));
                }
                if change < 1e-8 {
                    break;
                }
            }
            Ok(Fit {
                intercept: theta[0],
                coef: theta.iter().skip(1).copied().collect(),
                means,
            })
        }
    }
}

fn loss(task: TaskKind, y: &[f64], pred: &[f64]) -> f64 {
    match task {
        TaskKind::Regression => y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum(),
        TaskKind::Binary => y
            .iter()
            .zip(pred)
            .map(|(a, m)| {
                let p = stats::sigmoid(*m).clamp(1e-15, 1.0 - 1e-15);
                -2.0 * (a * p.ln() + (1.0 - a) * (1.0 - p).ln())
            })
            .sum(),
    }
}

fn build_model(view: &TrainView, layout: Layout, fit: Fit, lambda: f64, rows: &[usize]) -> GamModel {
    let mut terms = Vec::with_capacity(layout.blocks.len());
    for b in &layout.blocks {
        let coef = &fit.coef[b.offset..b.offset + b.width];
        let means = &fit.means[b.offset..b.offset + b.width];
        let term = match &b.kind {
            BlockKind::Spline(basis) => GamTerm::Spline {
                feature: b.feature,
                basis: basis.clone(),
                coefficients: coef.to_vec(),
                column_means: means.to_vec(),
                train_variance: 0.0,
            },
            BlockKind::Levels(_) => {
                let shift: f64 = coef.iter().zip(means).map(|(c, m)| c * m).sum();
                GamTerm::Levels {
                    feature: b.feature,
                    offsets: coef.iter().map(|c| c - shift).collect(),
                    train_variance: 0.0,
                }
            }
        };
        terms.push(term);
    }
    for term in &mut terms {
        let vals: Vec<f64> = rows
            .iter()
            .map(|&r| term.eval(view.x.get(r, term.feature())))
            .collect();
        let v = stats::population_variance(&vals);
        match term {
            GamTerm::Spline { train_variance, .. } | GamTerm::Levels { train_variance, .. } => {
                *train_variance = v
            }
        }
    }
    let roughness = layout.roughness(&fit.coef);
    let mut model = GamModel {
        intercept: fit.intercept,
        lambda,
        terms,
        task: view.task,
        lambda_search: Vec::new(),
        train_loss: 0.0,
        roughness,
    };
    let y: Vec<f64> = rows.iter().map(|&r| view.y[r]).collect();
    let margins: Vec<f64> = rows.iter().map(|&r| model.margin(view.x.row(r))).collect();
    model.train_loss = loss(view.task, &y, &margins);
    model
}

impl GamModel {
    pub fn fit(view: &TrainView, params: &GamParams) -> Result<GamModel> {
        params.validate()?;
        let all: Vec<usize> = (0..view.y.len()).collect();
        let (lambda, search) = match params.lambda {
            Some(l) => (l, Vec::new()),
            None => {
                let mut shuffled = all.clone();
                shuffled.shuffle(&mut rng_for(params.seed.unwrap_or(0), &[stream::CARVE]));
                let n_val = stats::round_count(params.validation_fraction * all.len() as f64)
                    .clamp(1, all.len() - 1);
                let (val, fit_rows) = shuffled.split_at(n_val);
                let layout = Layout::new(view, fit_rows, params.n_knots);
                let y_val: Vec<f64> = val.iter().map(|&r| view.y[r]).collect();
                let mut search = Vec::with_capacity(LAMBDA_GRID.len());
                let mut best = (f64::INFINITY, LAMBDA_GRID[0]);
                for &lambda in &LAMBDA_GRID {
                    let fit = fit_once(view, &layout, fit_rows, lambda, params.max_irls)?;
                    let tmp = build_model(view, Layout::new(view, fit_rows, params.n_knots), fit, lambda, fit_rows);
                    let pred: Vec<f64> = val.iter().map(|&r| tmp.margin(view.x.row(r))).collect();
                    let l = loss(view.task, &y_val, &pred) / val.len() as f64;
                    search.push([lambda, l]);
                    if l < best.0 {
                        best = (l, lambda);
                    }
                }
                (best.1, search)
            }
        };
        let layout = Layout::new(view, &all, params.n_knots);
        let fit = fit_once(view, &layout, &all, lambda, params.max_irls)?;
        let mut model = build_model(view, layout, fit, lambda, &all);
        model.lambda_search = search;
        Ok(model)
    }

    pub fn term_for(&self, feature: usize) -> Option<&GamTerm> {
        self.terms.iter().find(|t| t.feature() == feature)
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|t| t.eval(row[t.feature()]))
                .sum::<f64>()
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

    #[test]
    fn basis_is_partition_of_unity() {
        let vals: Vec<f64> = (0..100).map(|v| (v as f64 / 10.0).powi(2)).collect();
        let b = SplineBasis::from_values(&vals, 6);
        assert_eq!(b.len(), 10);
        for k in 0..=50 {
            let x = k as f64 * 2.0;
            let s: f64 = b.eval(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at {x}");
            assert!(b.eval(x).iter().all(|v| *v >= -1e-15));
        }
    }

    #[test]
    fn penalty_annihilates_linear_coefficients() {
        let s = difference_penalty(6);
        let lin = DVector::from_iterator(6, (0..6).map(|v| 2.0 * v as f64 - 1.0));
        assert!((s * lin).amax() < 1e-12);
    }

    fn sine_view(n: usize) -> TrainView {
        let x1: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 6.0).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 37) % 17) as f64).collect();
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a.sin() + 0.1 * b).collect();
        let ds = Dataset::new(
            "g",
            vec![Column::numeric("x1", x1), Column::numeric("x2", x2), Column::numeric("y", y)],
            "y",
            TaskKind::Regression,
        )
        .unwrap();
        TrainView::from_dataset(&ds).unwrap()
    }

    #[test]
    fn fits_smooth_signal_with_centered_terms() {
        let view = sine_view(300);
        let m = GamModel::fit(&view, &GamParams::default()).unwrap();
        let mse = m.train_loss / 300.0;
        assert!(mse < 1e-3, "mse {mse}");
        for t in &m.terms {
            let mean = (0..300).map(|i| t.eval(view.x.get(i, t.feature()))).sum::<f64>() / 300.0;
            assert!(mean.abs() <= 1e-8, "term mean {mean}");
        }
        assert_eq!(m.lambda_search.len(), 7);
    }

    #[test]
    fn larger_lambda_is_smoother() {
        let view = sine_view(200);
        let mut prev_rough = f64::INFINITY;
        let mut prev_loss = 0.0;
        for l in [1e-3, 1e-1, 1e1, 1e3] {
            let m = GamModel::fit(&view, &GamParams { lambda: Some(l), ..Default::default() }).unwrap();
            assert!(m.roughness <= prev_rough * (1.0 + 1e-9));
            assert!(m.train_loss >= prev_loss * (1.0 - 1e-9));
            prev_rough = m.roughness;
            prev_loss = m.train_loss;
        }
    }

    #[test]
    fn binary_gam_and_levels() {
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 4.0 - 2.0).collect();
        let g: Vec<&str> = (0..n).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let noise = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
                f64::from(x[i] * x[i] - 1.0 + noise > 0.0)
            })
            .collect();
        let ds = Dataset::new(
            "b",
            vec![Column::numeric("x", x.clone()), Column::categorical("g", &g), Column::numeric("y", y)],
            "y",
            TaskKind::Binary,
        )
        .unwrap();
        let view = TrainView::from_dataset(&ds).unwrap();
        let m = GamModel::fit(&view, &GamParams { lambda: Some(1.0), ..Default::default() }).unwrap();
        assert!(m.predict_row(&[1.9, 0.0]) > 0.5);
        assert!(m.predict_row(&[0.0, 0.0]) < 0.5);
        let levels = m.term_for(1).unwrap();
        let mean = (0..n).map(|i| levels.eval(view.x.get(i, 1))).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-8);
    }
}
