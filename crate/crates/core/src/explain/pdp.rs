use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Frame};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::stats;

pub const PDP_GRID: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PdpResult {
    Curve {
        feature: String,
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    /// One bar per level of a categorical feature.
    Levels {
        feature: String,
        levels: Vec<String>,
        values: Vec<f64>,
    },
    /// `values[i * second_grid.len() + k]` at `(first_grid[i], second_grid[k])`.
    Surface {
        features: [String; 2],
        first_grid: Vec<f64>,
        second_grid: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Distinct type-7 quantiles at `k / (g - 1)`, `k = 0..g`.
fn quantile_grid(values: &[f64], g: usize) -> Vec<f64> {
    let s = stats::sorted(values);
    if g == 1 {
        return vec![stats::quantile_sorted(&s, 0.5)];
    }
    let mut grid: Vec<f64> = (0..g).map(|k| stats::quantile_sorted(&s, k as f64 / (g - 1) as f64)).collect();
    grid.dedup();
    grid
}

/// Mean prediction over `frame` with the listed columns overwritten.
fn average_with(model: &TrainedModel, frame: &Frame, cols: &[usize], values: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut row = vec![0.0; frame.n_cols()];
    for r in frame.rows() {
        row.copy_from_slice(r);
        for (c, v) in cols.iter().zip(values) {
            row[*c] = *v;
        }
        total += model.predict_row(&row)?;
    }
    Ok(total / frame.n_rows() as f64)
}

/// Partial dependence over the test rows for one feature (curve, or bars
/// for a categorical) or two numeric features (surface).
pub fn pdp(model: &TrainedModel, ds: &Dataset, features: &[String], grid_size: usize) -> Result<PdpResult> {
    model.require_evaluable("partial dependence")?;
    if grid_size == 0 {
        return Err(Error::invalid("grid", "must be positive"));
    }
    let schema = ds.schema();
    let idx: Vec<usize> = features
        .iter()
        .map(|f| schema.index_of(f).ok_or_else(|| Error::MissingColumn(f.clone())))
        .collect::<Result<_>>()?;
    let rows = ds.test_rows();
    if rows.is_empty() {
        return Err(Error::data("the test partition is empty"));
    }
    let frame = ds.frame(&rows);
    match idx.as_slice() {
        [j] => {
            let info = &schema.features[*j];
            match info.kind {
                ColumnKind::Categorical => {
                    let values = (0..info.levels.len())
                        .into_par_iter()
                        .map(|k| average_with(model, &frame, &[*j], &[k as f64]))
                        .collect::<Result<_>>()?;
                    Ok(PdpResult::Levels { feature: info.name.clone(), levels: info.levels.clone(), values })
                }
                ColumnKind::Numeric => {
                    let grid = quantile_grid(&frame.column(*j), grid_size);
                    let values = grid
                        .par_iter()
                        .map(|g| average_with(model, &frame, &[*j], &[*g]))
                        .collect::<Result<_>>()?;
                    Ok(PdpResult::Curve { feature: info.name.clone(), grid, values })
                }
            }
        }
        [a, b] => {
            if a == b {
                return Err(Error::invalid("features", "a surface needs two distinct features"));
            }
            for j in [a, b] {
                if schema.features[*j].kind != ColumnKind::Numeric {
                    return Err(Error::invalid("features", "two-way partial dependence needs numeric features"));
                }
            }
            let first_grid = quantile_grid(&frame.column(*a), grid_size);
            let second_grid = quantile_grid(&frame.column(*b), grid_size);
            let cells: Vec<(f64, f64)> = first_grid
                .iter()
                .flat_map(|u| second_grid.iter().map(move |v| (*u, *v)))
                .collect();
            let values = cells
                .par_iter()
                .map(|(u, v)| average_with(model, &frame, &[*a, *b], &[*u, *v]))
                .collect::<Result<_>>()?;
            Ok(PdpResult::Surface {
                features: [schema.features[*a].name.clone(), schema.features[*b].name.clone()],
                first_grid,
                second_grid,
                values,
            })
        }
        _ => Err(Error::invalid("features", "partial dependence takes one or two features")),
    }
}
