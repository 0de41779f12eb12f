//! Feature discretization for the boosted models.
//!
//! A value falls in bin `k` where `k` is the number of cuts strictly below
//! it, so a value equal to a cut belongs to the lower bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    /// Strictly increasing interior cut points.
    pub cuts: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Set when the column had a single distinct value.
    #[serde(default)]
    pub constant: bool,
    /// Set when supervised binning found no split and quantiles were used.
    #[serde(default)]
    pub fallback: bool,
}

impl BinEdges {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|c| *c < x)
    }

    /// Full edge list `[min, cuts.., max]`.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.cuts.len() + 2);
        e.push(self.min);
        e.extend_from_slice(&self.cuts);
        e.push(self.max);
        e
    }
}

fn range_of(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::data("cannot bin an empty column"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("cannot bin non-finite values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Cuts at the `k/n_bins` quantiles, moved to midpoints between the
/// neighbouring distinct values so no observed value sits on a cut.
pub fn quantile_binning(values: &[f64], n_bins: usize) -> Result<BinEdges> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins", "must be positive"));
    }
    let (min, max) = range_of(values)?;
    if min == max {
        return Ok(BinEdges { cuts: Vec::new(), min, max, constant: true, fallback: false });
    }
    let s = stats::sorted(values);
    let mut distinct = s.clone();
    distinct.dedup();
    let mut cuts = Vec::new();
    for k in 1..n_bins {
        let q = stats::quantile_sorted(&s, k as f64 / n_bins as f64);
        // first distinct value strictly above q, cut halfway below it
        let i = distinct.partition_point(|v| *v <= q);
        if i == 0 || i >= distinct.len() {
            continue;
        }
        let cut = 0.5 * (distinct[i - 1] + distinct[i]);
        if cuts.last().is_none_or(|last| cut > *last) {
            cuts.push(cut);
        }
    }
    Ok(BinEdges { cuts, min, max, constant: false, fallback: false })
}

struct Segment {
    /// Index range into the sorted arrays.
    lo: usize,
    hi: usize,
    best: Option<(f64, usize)>,
}

/// Best variance-reducing split of the sorted segment `[lo, hi)`, as
/// (gain, split position) where the left part is `[lo, pos)`.
fn best_split(xs: &[f64], prefix: &[f64], prefix_sq: &[f64], lo: usize, hi: usize, min_leaf: usize) -> Option<(f64, usize)> {
    let n = (hi - lo) as f64;
    let sse = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        (prefix_sq[b] - prefix_sq[a]) - s * s / m
    };
    let total = sse(lo, hi);
    let mut best: Option<(f64, usize)> = None;
    for pos in lo + min_leaf..=hi.saturating_sub(min_leaf) {
        if pos <= lo || pos >= hi || xs[pos - 1] == xs[pos] {
            continue;
        }
        let gain = total - sse(lo, pos) - sse(pos, hi);
        if best.is_none_or(|(g, _)| gain > g * (1.0 + 1e-12) + 1e-15) {
            best = Some((gain, pos));
        }
    }
    let tol = 1e-12 * (total.abs() + n);
    best.filter(|(g, _)| *g > tol)
}

/// Supervised binning: a best-first single-feature regression tree on the
/// target with at most `max_bins` leaves, each holding at least
/// `min_fraction` of the rows. Falls back to quantile cuts when no split
/// improves the fit.
pub fn optimal_binning(values: &[f64], target: &[f64], max_bins: usize, min_fraction: f64) -> Result<BinEdges> {
    if max_bins == 0 {
        return Err(Error::invalid("max_bins", "must be positive"));
    }
    if !(0.0..0.5).contains(&min_fraction) {
        return Err(Error::invalid("min_fraction", "must lie in [0, 0.5)"));
    }
    if values.len() != target.len() {
        return Err(Error::data("binning column and target differ in length"));
    }
    let (min, max) = range_of(values)?;
    if min == max {
        return Ok(BinEdges { cuts: Vec::new(), min, max, constant: true, fallback: false });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let xs: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut prefix = vec![0.0; xs.len() + 1];
    let mut prefix_sq = vec![0.0; xs.len() + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] + target[i];
        prefix_sq[k + 1] = prefix_sq[k] + target[i] * target[i];
    }
    let min_leaf = ((min_fraction * xs.len() as f64).ceil() as usize).max(1);
    let mut segments = vec![Segment {
        lo: 0,
        hi: xs.len(),
        best: best_split(&xs, &prefix, &prefix_sq, 0, xs.len(), min_leaf),
    }];
    while segments.len() < max_bins {
        // highest gain first; ties go to the leftmost segment
        let pick = segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.best.map(|(g, _)| (i, g)))
            .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((i, g)),
            });
        let Some((i, _)) = pick else { break };
        let seg = segments.remove(i);
        let (_, pos) = seg.best.expect("picked segment has a split");
        let left = Segment { lo: seg.lo, hi: pos, best: best_split(&xs, &prefix, &prefix_sq, seg.lo, pos, min_leaf) };
        let right = Segment { lo: pos, hi: seg.hi, best: best_split(&xs, &prefix, &prefix_sq, pos, seg.hi, min_leaf) };
        segments.insert(i, right);
        segments.insert(i, left);
    }
    if segments.len() == 1 {
        let mut q = quantile_binning(values, max_bins)?;
        q.fallback = true;
        return Ok(q);
    }
    let cuts = segments[1..]
        .iter()
        .map(|s| 0.5 * (xs[s.lo - 1] + xs[s.lo]))
        .collect();
    Ok(BinEdges { cuts, min, max, constant: false, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_index_counts_cuts_below() {
        let e = BinEdges { cuts: vec![1.0, 2.0], min: 0.0, max: 3.0, constant: false, fallback: false };
        assert_eq!(e.bin(0.5), 0);
        assert_eq!(e.bin(1.0), 0);
        assert_eq!(e.bin(1.5), 1);
        assert_eq!(e.bin(9.0), 2);
        assert_eq!(e.edges(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn quantile_cuts_strictly_increase() {
        let v: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let e = quantile_binning(&v, 32).unwrap();
        assert!(e.cuts.windows(2).all(|w| w[0] < w[1]));
        assert!(e.n_bins() <= 7);
        let c = quantile_binning(&[3.0; 5], 4).unwrap();
        assert!(c.constant);
        assert_eq!(c.n_bins(), 1);
    }

    #[test]
    fn step_target_cut_lands_in_gap() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let y: Vec<f64> = x.iter().map(|v| f64::from(*v > 0.5)).collect();
        let e = optimal_binning(&x, &y, 10, 0.05).unwrap();
        assert_eq!(e.cuts.len(), 1);
        let below = x.iter().copied().filter(|v| *v <= 0.5).fold(f64::MIN, f64::max);
        let above = x.iter().copied().filter(|v| *v > 0.5).fold(f64::MAX, f64::min);
        assert!(e.cuts[0] > below && e.cuts[0] < above);
    }

    #[test]
    fn leaf_cap_and_minimum_size() {
        let x: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 40.0).floor()).collect();
        let e = optimal_binning(&x, &y, 10, 0.05).unwrap();
        assert!(e.n_bins() <= 10);
        let mut counts = vec![0usize; e.n_bins()];
        for v in &x {
            counts[e.bin(*v)] += 1;
        }
        assert!(counts.iter().all(|c| *c >= 20));
    }

    #[test]
    fn flat_target_falls_back_to_quantiles() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let e = optimal_binning(&x, &[1.0; 100], 4, 0.05).unwrap();
        assert!(e.fallback);
        assert_eq!(e.n_bins(), 4);
    }

    #[test]
    fn constant_column_is_one_flagged_bin() {
        let e = optimal_binning(&[2.0; 10], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 10, 0.05).unwrap();
        assert!(e.constant);
        assert_eq!(e.n_bins(), 1);
    }
}
