use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::stats;

pub const ALE_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    /// Quantile bin edges over the train rows (duplicates removed).
    pub edges: Vec<f64>,
    /// Centered accumulated effect at each edge.
    pub values: Vec<f64>,
    /// Train rows per bin; `counts.len() == edges.len() - 1`.
    pub counts: Vec<usize>,
}

/// Accumulated local effects of a numeric feature over the train rows.
///
/// Bin `k` covers `(e_k, e_{k+1}]`, with the first bin also holding `e_0`.
/// Empty bins contribute no change. The curve is shifted so that the
/// count-weighted mean of bin midpoint values is zero.
pub fn ale(model: &TrainedModel, ds: &Dataset, feature: &str, bins: usize) -> Result<AleCurve> {
    model.require_evaluable("accumulated local effects")?;
    if bins == 0 {
        return Err(Error::invalid("bins", "must be positive"));
    }
    let schema = ds.schema();
    let j = schema.index_of(feature).ok_or_else(|| Error::MissingColumn(feature.into()))?;
    if schema.features[j].kind != ColumnKind::Numeric {
        return Err(Error::invalid("feature", "accumulated local effects need a numeric feature"));
    }
    let rows = ds.train_rows();
    let frame = ds.frame(&rows);
    let x = frame.column(j);
    let edges = stats::quantile_edges(&x, bins);
    if edges.len() < 2 {
        return Ok(AleCurve { feature: feature.into(), edges, values: vec![0.0], counts: vec![rows.len()] });
    }
    let k = edges.len() - 1;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut row = vec![0.0; frame.n_cols()];
    for (i, r) in frame.rows().enumerate() {
        let b = edges[1..].partition_point(|e| *e < x[i]).min(k - 1);
        row.copy_from_slice(r);
        row[j] = edges[b + 1];
        let hi = model.predict_row(&row)?;
        row[j] = edges[b];
        let lo = model.predict_row(&row)?;
        sums[b] += hi - lo;
        counts[b] += 1;
    }
    let mut values = Vec::with_capacity(k + 1);
    values.push(0.0);
    for b in 0..k {
        let local = if counts[b] > 0 { sums[b] / counts[b] as f64 } else { 0.0 };
        values.push(values[b] + local);
    }
    let total: usize = counts.iter().sum();
    let center = (0..k)
        .map(|b| counts[b] as f64 * 0.5 * (values[b] + values[b + 1]))
        .sum::<f64>()
        / total as f64;
    for v in &mut values {
        *v -= center;
    }
    Ok(AleCurve { feature: feature.into(), edges, values, counts })
}
