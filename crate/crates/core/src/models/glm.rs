//! Elastic-net linear and logistic regression.
//!
//! Objective on internally standardized features:
//!
//! ```text
//! (1/2n) sum w_i (z_i - b0 - x_i'b)^2 + alpha (rho |b|_1 + (1 - rho)/2 |b|_2^2)
//! ```
//!
//! minimized by cyclic coordinate descent with soft-thresholding. Logistic
//! regression wraps the same solver in a proximal-Newton (IRLS) outer loop.
//! Coefficients are mapped back to the original feature scale after fitting.

use serde::{Deserialize, Serialize};

use super::design::Design;
use super::TrainView;
use crate::data::{Frame, TaskKind};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
}

impl Default for GlmParams {
    fn default() -> Self {
        GlmParams {
            alpha: 0.0,
            l1_ratio: 0.5,
            tol: 1e-7,
            max_sweeps: 10_000,
            max_outer: 100,
        }
    }
}

impl GlmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid("alpha", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::invalid("l1_ratio", "must lie in [0, 1]"));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 || self.max_outer == 0 {
            return Err(Error::invalid("tol/max_sweeps/max_outer", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub design: Design,
    /// Original-scale coefficient per design column.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub link: Link,
    /// Train means of the design columns.
    pub design_means: Vec<f64>,
    /// Train sample standard deviations of the design columns.
    pub design_sds: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Diagnostics of one coordinate-descent fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFitTrace {
    /// Objective value after each sweep of the final inner solve.
    pub objective: Vec<f64>,
    pub sweeps: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Max violation of the stationarity conditions on the standardized problem.
    pub kkt_residual: f64,
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Weighted elastic-net least-squares problem over standardized columns.
struct Problem<'a> {
    cols: &'a [Vec<f64>],
    weights: Option<&'a [f64]>,
    n: f64,
    alpha: f64,
    rho: f64,
}

impl Problem<'_> {
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn objective(&self, resid: &[f64], beta: &[f64]) -> f64 {
        let loss = stats::compensated_sum(resid.iter().enumerate().map(|(i, r)| self.w(i) * r * r)) / (2.0 * self.n);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        loss + self.alpha * (self.rho * l1 + (1.0 - self.rho) / 2.0 * l2)
    }

    fn gradient(&self, j: usize, resid: &[f64]) -> f64 {
        self.cols[j]
            .iter()
            .zip(resid)
            .enumerate()
            .map(|(i, (x, r))| self.w(i) * x * r)
            .sum::<f64>()
            / self.n
    }

    fn kkt_residual(&self, resid: &[f64], beta: &[f64]) -> f64 {
        let intercept_grad = resid
            .iter()
            .enumerate()
            .map(|(i, r)| self.w(i) * r)
            .sum::<f64>()
            .abs()
            / self.n;
        let l1 = self.alpha * self.rho;
        let l2 = self.alpha * (1.0 - self.rho);
        (0..beta.len())
            .map(|j| {
                let g = self.gradient(j, resid);
                if beta[j] != 0.0 {
                    (g - l2 * beta[j] - l1 * beta[j].signum()).abs()
                } else {
                    (g.abs() - l1).max(0.0)
                }
            })
            .fold(intercept_grad, f64::max)
    }

    /// Cyclic coordinate descent from the given warm start; `resid` must equal
    /// `z - b0 - X b` on entry and is kept in sync.
    fn solve(
        &self,
        beta: &mut [f64],
        intercept: &mut f64,
        resid: &mut [f64],
        tol: f64,
        max_sweeps: usize,
        mut history: Option<&mut Vec<f64>>,
    ) -> (usize, bool) {
        let p = beta.len();
        let wsum: f64 = (0..resid.len()).map(|i| self.w(i)).sum();
        let colsq: Vec<f64> = (0..p)
            .map(|j| {
                self.cols[j]
                    .iter()
                    .enumerate()
                    .map(|(i, x)| self.w(i) * x * x)
                    .sum::<f64>()
                    / self.n
            })
            .collect();
        let l1 = self.alpha * self.rho;
        let l2 = self.alpha * (1.0 - self.rho);
        for sweep in 1..=max_sweeps {
            let mut max_change: f64 = 0.0;
            if wsum > 0.0 {
                let shift = resid
                    .iter()
                    .enumerate()
                    .map(|(i, r)| self.w(i) * r)
                    .sum::<f64>()
                    / wsum;
                if shift != 0.0 {
                    *intercept += shift;
                    resid.iter_mut().for_each(|r| *r -= shift);
                    max_change = max_change.max(shift.abs());
                }
            }
            for j in 0..p {
                let old = beta[j];
                let new = if colsq[j] > 0.0 {
                    let rho_j = self.gradient(j, resid) + colsq[j] * old;
                    soft_threshold(rho_j, l1) / (colsq[j] + l2)
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    for (r, x) in resid.iter_mut().zip(&self.cols[j]) {
                        *r -= x * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if let Some(h) = history.as_deref_mut() {
                h.push(self.objective(resid, beta));
            }
            if max_change < tol {
                return (sweep, true);
            }
        }
        (max_sweeps, false)
    }
}

struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    /// Population sd; zero for constant columns.
    scales: Vec<f64>,
}

fn standardize(design: &Design, x: &Frame) -> Standardized {
    let raw = design.expand_columns(x);
    let mut means = Vec::with_capacity(raw.len());
    let mut scales = Vec::with_capacity(raw.len());
    let cols = raw
        .into_iter()
        .map(|c| {
            let m = stats::mean(&c);
            let s = stats::population_variance(&c).sqrt();
            means.push(m);
            scales.push(s);
            if s > 0.0 {
                c.iter().map(|v| (v - m) / s).collect()
            } else {
                vec![0.0; c.len()]
            }
        })
        .collect();
    Standardized { cols, means, scales }
}

/// Smallest alpha at which every coefficient of the least-squares fit is
/// exactly zero: `max_j |x_j'(y - ybar)| / (n rho)` on standardized columns.
pub fn alpha_max(view: &TrainView, l1_ratio: f64) -> f64 {
    let design = Design::from_schema(&view.schema);
    let st = standardize(&design, &view.x);
    let ybar = stats::mean(&view.y);
    let n = view.y.len() as f64;
    st.cols
        .iter()
        .map(|c| {
            c.iter()
                .zip(&view.y)
                .map(|(x, y)| x * (y - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
        / l1_ratio
}

impl GlmModel {
    pub fn fit(view: &TrainView, params: &GlmParams) -> Result<GlmModel> {
        Self::fit_traced(view, params).map(|(m, _)| m)
    }

    pub fn fit_traced(view: &TrainView, params: &GlmParams) -> Result<(GlmModel, GlmFitTrace)> {
        Self::fit_warm(view, params, None)
    }

    /// Fit starting from `warm` (a model of the same schema), e.g. along a
    /// decreasing alpha path.
    pub fn fit_warm(
        view: &TrainView,
        params: &GlmParams,
        warm: Option<&GlmModel>,
    ) -> Result<(GlmModel, GlmFitTrace)> {
        params.validate()?;
        let design = Design::from_schema(&view.schema);
        let st = standardize(&design, &view.x);
        let n = view.y.len();
        let p = design.len();

        // Warm start: convert original-scale coefficients back to the standardized problem.
        let (mut beta, mut b0) = match warm {
            Some(m) if m.coefficients.len() == p => {
                let beta: Vec<f64> = (0..p).map(|j| m.coefficients[j] * st.scales[j]).collect();
                let b0 = m.intercept
                    + (0..p).map(|j| m.coefficients[j] * st.means[j]).sum::<f64>();
                (beta, b0)
            }
            _ => (vec![0.0; p], 0.0),
        };

        let mut objective = Vec::new();
        let (sweeps, converged, outer, kkt) = match view.task {
            TaskKind::Regression => {
                let problem = Problem {
                    cols: &st.cols,
                    weights: None,
                    n: n as f64,
                    alpha: params.alpha,
                    rho: params.l1_ratio,
                };
                let mut resid = residuals(&st.cols, &view.y, &beta, b0);
                objective.push(problem.objective(&resid, &beta));
                let (sweeps, ok) = problem.solve(
                    &mut beta,
                    &mut b0,
                    &mut resid,
                    params.tol,
                    params.max_sweeps,
                    Some(&mut objective),
                );
                let kkt = problem.kkt_residual(&resid, &beta);
                (sweeps, ok, 1, kkt)
            }
            TaskKind::Binary => {
                let mut total_sweeps = 0;
                let mut converged = false;
                let mut outer = 0;
                let mut kkt = f64::INFINITY;
                while outer < params.max_outer {
                    outer += 1;
                    let eta = linear_predictor(&st.cols, &beta, b0, n);
                    let mut w = Vec::with_capacity(n);
                    let mut z = Vec::with_capacity(n);
                    for i in 0..n {
                        let pr = stats::sigmoid(eta[i]);
                        let wi = (pr * (1.0 - pr)).max(1e-5);
                        w.push(wi);
                        z.push(eta[i] + (view.y[i] - pr) / wi);
                    }
                    let problem = Problem {
                        cols: &st.cols,
                        weights: Some(&w),
                        n: n as f64,
                        alpha: params.alpha,
                        rho: params.l1_ratio,
                    };
                    let before: Vec<f64> = std::iter::once(b0).chain(beta.iter().copied()).collect();
                    let mut resid = residuals(&st.cols, &z, &beta, b0);
                    objective.clear();
                    objective.push(problem.objective(&resid, &beta));
                    let (sweeps, _) = problem.solve(
                        &mut beta,
                        &mut b0,
                        &mut resid,
                        params.tol,
                        params.max_sweeps,
                        Some(&mut objective),
                    );
                    total_sweeps += sweeps;
                    kkt = problem.kkt_residual(&resid, &beta);
                    let change = std::iter::once(b0)
                        .chain(beta.iter().copied())
                        .zip(before)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if !change.is_finite() {
                        return Err(Error::Numerical("logistic GLM diverged".into()));
                    }
                    if change < params.tol {
                        converged = true;
                        break;
                    }
                }
                (total_sweeps, converged, outer, kkt)
            }
        };

        let coefficients: Vec<f64> = (0..p)
            .map(|j| if st.scales[j] > 0.0 { beta[j] / st.scales[j] } else { 0.0 })
            .collect();
        let intercept = b0 - (0..p).map(|j| coefficients[j] * st.means[j]).sum::<f64>();
        let raw = design.expand_columns(&view.x);
        let design_sds = raw.iter().map(|c| stats::sd(c)).collect();
        let model = GlmModel {
            design,
            coefficients,
            intercept,
            alpha: params.alpha,
            l1_ratio: params.l1_ratio,
            link: match view.task {
                TaskKind::Regression => Link::Identity,
                TaskKind::Binary => Link::Logit,
            },
            design_means: st.means.clone(),
            design_sds,
            sweeps,
            converged,
            kkt_residual: kkt,
        };
        let trace = GlmFitTrace {
            objective,
            sweeps,
            outer_iterations: outer,
            converged,
            kkt_residual: kkt,
        };
        Ok((model, trace))
    }

    /// Pre-link linear predictor for one schema row.
    pub fn margin(&self, row: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.coefficients.len());
        self.design.expand_row(row, &mut buf);
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(&buf)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let m = self.margin(row);
        match self.link {
            Link::Identity => m,
            Link::Logit => stats::sigmoid(m),
        }
    }

    /// Original-scale coefficient for the first design column of a numeric feature.
    pub fn coefficient_of(&self, feature: usize) -> Option<f64> {
        self.design
            .columns
            .iter()
            .position(|c| c.feature == feature && c.level.is_none())
            .map(|k| self.coefficients[k])
    }
}

fn linear_predictor(cols: &[Vec<f64>], beta: &[f64], b0: f64, n: usize) -> Vec<f64> {
    let mut eta = vec![b0; n];
    for (c, b) in cols.iter().zip(beta) {
        if *b != 0.0 {
            for (e, x) in eta.iter_mut().zip(c) {
                *e += b * x;
            }
        }
    }
    eta
}

fn residuals(cols: &[Vec<f64>], z: &[f64], beta: &[f64], b0: f64) -> Vec<f64> {
    let eta = linear_predictor(cols, beta, b0, z.len());
    z.iter().zip(eta).map(|(z, e)| z - e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Dataset};

    fn view(cols: Vec<Column>, task: TaskKind) -> TrainView {
        let ds = Dataset::new("g", cols, "y", task).unwrap();
        TrainView::from_dataset(&ds).unwrap()
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let x: Vec<f64> = (0..20).map(|v| v as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let v = view(vec![Column::numeric("x", x), Column::numeric("y", y)], TaskKind::Regression);
        let m = GlmModel::fit(&v, &GlmParams::default()).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
        assert!((m.predict_row(&[0.0]) - m.intercept).abs() < 1e-15);
    }

    #[test]
    fn large_alpha_zeroes_everything() {
        let x: Vec<f64> = (0..30).map(|v| (v as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 0.5).collect();
        let v = view(vec![Column::numeric("x", x), Column::numeric("y", y.clone())], TaskKind::Regression);
        let amax = alpha_max(&v, 1.0);
        let m = GlmModel::fit(&v, &GlmParams { alpha: amax * 1.01, l1_ratio: 1.0, ..Default::default() }).unwrap();
        assert_eq!(m.coefficients, vec![0.0]);
        assert!((m.intercept - stats::mean(&y)).abs() < 1e-12);
        let below = GlmModel::fit(&v, &GlmParams { alpha: amax * 0.9, l1_ratio: 1.0, ..Default::default() }).unwrap();
        assert!(below.coefficients[0] != 0.0);
    }

    #[test]
    fn objective_is_monotone_and_kkt_small() {
        let n = 200;
        let cols: Vec<Column> = (0..5)
            .map(|j| {
                Column::numeric(
                    format!("x{j}"),
                    (0..n).map(|i| ((i * (j + 3) * 7919) % 101) as f64 / 50.0 - 1.0).collect(),
                )
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * cols[0].value(i) - cols[3].value(i) + 0.1 * ((i % 7) as f64 - 3.0))
            .collect();
        let mut all = cols;
        all.push(Column::numeric("y", y));
        let v = view(all, TaskKind::Regression);
        let (_, trace) = GlmModel::fit_traced(&v, &GlmParams { alpha: 0.05, l1_ratio: 0.7, ..Default::default() }).unwrap();
        assert!(trace.converged);
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "objective rose: {} -> {}", w[0], w[1]);
        }
        assert!(trace.kkt_residual <= 1e-6, "kkt {}", trace.kkt_residual);
    }

    #[test]
    fn logistic_fit_separates_and_bounds() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 4.0 - 2.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| if v + 0.5 * (((i * 37) % 11) as f64 / 5.0 - 1.0) > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let v = view(vec![Column::numeric("x", x), Column::numeric("y", y)], TaskKind::Binary);
        let (m, trace) = GlmModel::fit_traced(&v, &GlmParams { alpha: 0.01, ..Default::default() }).unwrap();
        assert!(trace.converged);
        assert!(m.coefficients[0] > 0.0);
        for i in 0..50 {
            let p = m.predict_row(&[i as f64 - 25.0]);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn categorical_one_hot() {
        let labels = ["a", "b", "c", "a", "b", "c", "a", "b", "c", "a"];
        let y: Vec<f64> = labels
            .iter()
            .map(|l| match *l {
                "a" => 1.0,
                "b" => 3.0,
                _ => -2.0,
            })
            .collect();
        let v = view(
            vec![Column::categorical("g", &labels), Column::numeric("y", y)],
            TaskKind::Regression,
        );
        let m = GlmModel::fit(&v, &GlmParams::default()).unwrap();
        assert_eq!(m.coefficients.len(), 2);
        assert!((m.predict_row(&[0.0]) - 1.0).abs() < 1e-8);
        assert!((m.predict_row(&[1.0]) - 3.0).abs() < 1e-8);
        assert!((m.predict_row(&[2.0]) + 2.0).abs() < 1e-8);
    }
}
