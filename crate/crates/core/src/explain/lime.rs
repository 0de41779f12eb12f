use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::rng::{rng_for, stream};
use crate::stats;

const RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeOptions {
    pub samples: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for LimeOptions {
    fn default() -> Self {
        LimeOptions { samples: 1000, top_k: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeTerm {
    pub feature: usize,
    pub name: String,
    /// Change in prediction per unit of the feature (numeric) or for
    /// switching away from the instance's level (categorical).
    pub coefficient: f64,
    /// Coefficient on the standardized difference.
    pub standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub terms: Vec<LimeTerm>,
    /// Surrogate value at the instance.
    pub intercept: f64,
    pub prediction: f64,
    pub weighted_r2: Option<f64>,
    pub kernel_width: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Weighted Pearson correlation; `None` when either side is constant.
fn weighted_corr(x: &[f64], y: &[f64], w: &[f64]) -> Option<f64> {
    let mx = stats::weighted_mean(x, w)?;
    let my = stats::weighted_mean(y, w)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += w[i] * dx * dy;
        sxx += w[i] * dx * dx;
        syy += w[i] * dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Local surrogate around `instance`: perturbed samples (sample 0 is the
/// instance itself) weighted by an exponential kernel on standardized
/// distance, then a weighted ridge fit on the top-K features.
pub fn lime_explain(model: &TrainedModel, ds: &Dataset, instance: &[f64], opts: &LimeOptions) -> Result<LimeExplanation> {
    model.require_evaluable("LIME")?;
    if opts.samples < 2 {
        return Err(Error::invalid("samples", "must be at least 2"));
    }
    if opts.top_k == 0 {
        return Err(Error::invalid("top_k", "must be positive"));
    }
    let schema = ds.schema();
    let p = schema.len();
    if instance.len() != p {
        return Err(Error::Schema(format!("instance has {} values, model expects {p}", instance.len())));
    }
    let train = ds.frame(&ds.train_rows());
    let columns: Vec<Vec<f64>> = (0..p).map(|j| train.column(j)).collect();
    let sds: Vec<f64> = columns.iter().map(|c| stats::sd(c)).collect();
    let kinds: Vec<ColumnKind> = schema.features.iter().map(|f| f.kind).collect();

    let mut rng = rng_for(opts.seed, &[stream::LIME]);
    let n = opts.samples;
    // design in standardized-difference coordinates
    let mut z = vec![vec![0.0; p]; n];
    let mut preds = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let kernel_width = 0.75 * (p as f64).sqrt();
    let mut row = instance.to_vec();
    for (s, zs) in z.iter_mut().enumerate() {
        row.copy_from_slice(instance);
        if s > 0 {
            for j in 0..p {
                match kinds[j] {
                    ColumnKind::Numeric => {
                        let e: f64 = rng.sample(StandardNormal);
                        row[j] = instance[j] + sds[j] * e;
                        zs[j] = if sds[j] > 0.0 { e } else { 0.0 };
                    }
                    ColumnKind::Categorical => {
                        row[j] = columns[j][rng.random_range(0..columns[j].len())];
                        zs[j] = f64::from(row[j] != instance[j]);
                    }
                }
            }
        }
        let d2: f64 = zs.iter().map(|v| v * v).sum();
        weights.push((-d2 / (kernel_width * kernel_width)).exp());
        preds.push(model.predict_row(&row)?);
    }
    let total_w: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total_w;
    }

    let mut ranked: Vec<(usize, f64)> = (0..p)
        .map(|j| {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            (j, weighted_corr(&col, &preds, &weights).map_or(0.0, f64::abs))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let selected: Vec<usize> = ranked.iter().take(opts.top_k.min(p)).map(|(j, _)| *j).collect();

    // weighted ridge with the intercept left unpenalized via centering
    let k = selected.len();
    let zbar: Vec<f64> = selected
        .iter()
        .map(|&j| z.iter().zip(&weights).map(|(r, w)| w * r[j]).sum())
        .collect();
    let ybar: f64 = preds.iter().zip(&weights).map(|(y, w)| w * y).sum();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (i, zr) in z.iter().enumerate() {
        let w = weights[i];
        let centered: Vec<f64> = selected.iter().zip(&zbar).map(|(&j, m)| zr[j] - m).collect();
        for u in 0..k {
            b[u] += w * centered[u] * (preds[i] - ybar);
            for v in 0..k {
                a[(u, v)] += w * centered[u] * centered[v];
            }
        }
    }
    for u in 0..k {
        a[(u, u)] += RIDGE;
    }
    let beta = a
        .cholesky()
        .map(|c| c.solve(&b))
        .ok_or_else(|| Error::Numerical("LIME ridge system is not positive definite".into()))?;
    let intercept = ybar - beta.iter().zip(&zbar).map(|(b, m)| b * m).sum::<f64>();
    let fitted = |zr: &[f64]| intercept + selected.iter().zip(beta.iter()).map(|(&j, b)| b * zr[j]).sum::<f64>();
    let ss_res: f64 = z.iter().zip(&preds).zip(&weights).map(|((zr, y), w)| w * (y - fitted(zr)).powi(2)).sum();
    let ss_tot: f64 = preds.iter().zip(&weights).map(|(y, w)| w * (y - ybar).powi(2)).sum();
    let weighted_r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);

    let terms = selected
        .iter()
        .zip(beta.iter())
        .map(|(&j, &b)| LimeTerm {
            feature: j,
            name: schema.features[j].name.clone(),
            coefficient: match kinds[j] {
                ColumnKind::Numeric if sds[j] > 0.0 => b / sds[j],
                _ => b,
            },
            standardized: b,
        })
        .collect();
    Ok(LimeExplanation {
        terms,
        intercept,
        prediction: preds[0],
        weighted_r2,
        kernel_width,
        samples: n,
        seed: opts.seed,
    })
}
