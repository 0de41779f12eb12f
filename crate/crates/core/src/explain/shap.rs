use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::rng::{rng_for, stream};

pub const SHAP_BACKGROUND: usize = 100;
pub const SHAP_COALITIONS: usize = 2048;
/// Above this many features coalitions are sampled instead of enumerated.
pub const EXACT_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValue {
    pub feature: usize,
    pub name: String,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// Mean prediction over the background.
    pub base_value: f64,
    pub values: Vec<ShapValue>,
    pub prediction: f64,
    pub mode: ShapMode,
    /// Dataset row ids of the background sample.
    pub background_rows: Vec<usize>,
    pub coalitions: usize,
    pub seed: u64,
}

/// Up to `size` train rows drawn without replacement, in ascending order.
pub fn sample_background(ds: &Dataset, size: usize, seed: u64) -> Vec<usize> {
    let train = ds.train_rows();
    if train.len() <= size {
        return train;
    }
    let mut rng = rng_for(seed, &[stream::SHAP_BACKGROUND]);
    let mut picked: Vec<usize> = index::sample(&mut rng, train.len(), size).into_iter().map(|i| train[i]).collect();
    picked.sort_unstable();
    picked
}

/// Value of a coalition: mean prediction with the coalition's features
/// taken from the instance and the rest from each background row.
fn coalition_value(f: &(dyn Fn(&[f64]) -> Result<f64> + Sync), x: &[f64], background: &Frame, mask: &[bool]) -> Result<f64> {
    let mut row = vec![0.0; x.len()];
    let mut total = 0.0;
    for b in background.rows() {
        for j in 0..x.len() {
            row[j] = if mask[j] { x[j] } else { b[j] };
        }
        total += f(&row)?;
    }
    Ok(total / background.n_rows() as f64)
}

fn mask_of(bits: usize, d: usize) -> Vec<bool> {
    (0..d).map(|j| bits >> j & 1 == 1).collect()
}

/// Exact interventional Shapley values by enumerating all `2^d`
/// coalitions. Returns `(phi_0, phi)`.
pub fn exact_shapley(
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    x: &[f64],
    background: &Frame,
) -> Result<(f64, Vec<f64>)> {
    let d = x.len();
    if d > 20 {
        return Err(Error::invalid("features", "exact enumeration is limited to 20 features"));
    }
    let values: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|bits| coalition_value(f, x, background, &mask_of(bits, d)))
        .collect::<Result<_>>()?;
    // |S|! (d - |S| - 1)! / d!
    let mut fact = vec![1.0f64; d + 1];
    for k in 1..=d {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let phi = (0..d)
        .map(|j| {
            (0..1usize << d)
                .filter(|bits| bits >> j & 1 == 0)
                .map(|bits| weight[bits.count_ones() as usize] * (values[bits | 1 << j] - values[bits]))
                .sum()
        })
        .collect();
    Ok((values[0], phi))
}

/// Kernel SHAP: coalitions sampled from the Shapley kernel's size
/// distribution, solved by least squares with the efficiency constraint
/// substituted out through the last feature.
fn sampled_shapley(
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    x: &[f64],
    background: &Frame,
    coalitions: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let d = x.len();
    let mut rng = rng_for(seed, &[stream::SHAP_COALITIONS]);
    let size_weights: Vec<f64> = (1..d).map(|s| (d - 1) as f64 / (s * (d - s)) as f64).collect();
    let total: f64 = size_weights.iter().sum();
    let mut masks = Vec::with_capacity(coalitions);
    let mut order: Vec<usize> = (0..d).collect();
    for _ in 0..coalitions {
        let mut u = rng.random::<f64>() * total;
        let mut size = d - 1;
        for (k, w) in size_weights.iter().enumerate() {
            if u < *w {
                size = k + 1;
                break;
            }
            u -= w;
        }
        order.shuffle(&mut rng);
        let mut mask = vec![false; d];
        for &j in &order[..size] {
            mask[j] = true;
        }
        masks.push(mask);
    }
    let v_empty = coalition_value(f, x, background, &vec![false; d])?;
    let v_full = coalition_value(f, x, background, &vec![true; d])?;
    let values: Vec<f64> = masks
        .par_iter()
        .map(|m| coalition_value(f, x, background, m))
        .collect::<Result<_>>()?;
    let delta = v_full - v_empty;
    let last = d - 1;
    let mut a = DMatrix::<f64>::zeros(last, last);
    let mut b = DVector::<f64>::zeros(last);
    for (m, v) in masks.iter().zip(&values) {
        let zl = f64::from(m[last]);
        let target = v - v_empty - zl * delta;
        let row: Vec<f64> = (0..last).map(|j| f64::from(m[j]) - zl).collect();
        for u in 0..last {
            b[u] += row[u] * target;
            for w in 0..last {
                a[(u, w)] += row[u] * row[w];
            }
        }
    }
    for u in 0..last {
        a[(u, u)] += 1e-10;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("kernel SHAP system is singular".into()))?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok((v_empty, phi))
}

/// SHAP values for `instance` against an explicit background frame.
pub fn shap_with_background(
    model: &TrainedModel,
    instance: &[f64],
    background: &Frame,
    coalitions: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>, ShapMode)> {
    model.require_evaluable("SHAP")?;
    if background.n_rows() == 0 {
        return Err(Error::data("SHAP background is empty"));
    }
    if instance.len() != model.schema.len() || background.n_cols() != model.schema.len() {
        return Err(Error::Schema("instance or background does not match the model schema".into()));
    }
    let f = |row: &[f64]| model.predict_row(row);
    if instance.len() <= EXACT_MAX_FEATURES {
        let (b, phi) = exact_shapley(&f, instance, background)?;
        Ok((b, phi, ShapMode::Exact))
    } else {
        if coalitions == 0 {
            return Err(Error::invalid("coalitions", "must be positive"));
        }
        let (b, phi) = sampled_shapley(&f, instance, background, coalitions, seed)?;
        Ok((b, phi, ShapMode::Sampled))
    }
}

/// SHAP values with a background drawn from the train split.
pub fn shap_explain(model: &TrainedModel, ds: &Dataset, instance: &[f64], background_size: usize, seed: u64) -> Result<ShapExplanation> {
    if background_size == 0 {
        return Err(Error::invalid("background", "must be positive"));
    }
    let background_rows = sample_background(ds, background_size, seed);
    let background = ds.frame(&background_rows);
    let (base_value, phi, mode) = shap_with_background(model, instance, &background, SHAP_COALITIONS, seed)?;
    let names = ds.feature_names();
    Ok(ShapExplanation {
        base_value,
        values: phi
            .into_iter()
            .enumerate()
            .map(|(j, phi)| ShapValue { feature: j, name: names[j].clone(), phi })
            .collect(),
        prediction: model.predict_row(instance)?,
        mode,
        coalitions: match mode {
            ShapMode::Exact => 1 << instance.len(),
            ShapMode::Sampled => SHAP_COALITIONS,
        },
        background_rows,
        seed,
    })
}
