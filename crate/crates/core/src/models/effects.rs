//! Functional-ANOVA form of a boosted ensemble: intercept, per-feature step
//! functions over bins, and pairwise tables over bin grids.

use serde::{Deserialize, Serialize};

use super::binning::BinEdges;
use crate::error::{Error, Result};

/// Maps a raw feature value to a bin index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureBins {
    Numeric { edges: BinEdges },
    /// Level code to bin; levels are ranked by train target mean.
    Categorical { level_bins: Vec<usize> },
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        match self {
            FeatureBins::Numeric { edges } => edges.n_bins(),
            FeatureBins::Categorical { level_bins } => level_bins.len().max(1),
        }
    }

    pub fn bin(&self, x: f64) -> usize {
        match self {
            FeatureBins::Numeric { edges } => edges.bin(x),
            // unseen codes go to the first bin
            FeatureBins::Categorical { level_bins } => {
                level_bins.get(x as usize).copied().unwrap_or(0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEffect {
    /// Feature indices, first < second.
    pub features: [usize; 2],
    /// Row-major table: `values[a * n_second + b]`.
    pub values: Vec<f64>,
    /// Train frequency of each cell, same layout.
    pub weights: Vec<f64>,
}

impl PairEffect {
    pub fn n_second(&self, bins: &[FeatureBins]) -> usize {
        bins[self.features[1]].n_bins()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifyReport {
    pub sweeps: usize,
    pub max_marginal: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRepresentation {
    pub intercept: f64,
    pub bins: Vec<FeatureBins>,
    /// Step-function value per bin, per feature.
    pub mains: Vec<Vec<f64>>,
    /// Train frequency per bin, per feature.
    pub main_weights: Vec<Vec<f64>>,
    pub pairs: Vec<PairEffect>,
    pub purified: bool,
}

const PURIFY_TOL: f64 = 1e-10;
const PURIFY_MAX_SWEEPS: usize = 100;

fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    (total > 0.0).then(|| values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

impl EffectRepresentation {
    pub fn new(intercept: f64, bins: Vec<FeatureBins>) -> Self {
        let mains = bins.iter().map(|b| vec![0.0; b.n_bins()]).collect();
        let main_weights = bins.iter().map(|b| vec![0.0; b.n_bins()]).collect();
        EffectRepresentation {
            intercept,
            bins,
            mains,
            main_weights,
            pairs: Vec::new(),
            purified: false,
        }
    }

    pub fn bin_row(&self, row: &[f64]) -> Vec<usize> {
        self.bins.iter().enumerate().map(|(j, b)| b.bin(row[j])).collect()
    }

    /// Index of the pair table for `(a, b)`, created on demand.
    pub fn pair_index(&mut self, a: usize, b: usize) -> usize {
        let key = [a.min(b), a.max(b)];
        if let Some(i) = self.pairs.iter().position(|p| p.features == key) {
            return i;
        }
        let cells = self.bins[key[0]].n_bins() * self.bins[key[1]].n_bins();
        self.pairs.push(PairEffect {
            features: key,
            values: vec![0.0; cells],
            weights: vec![0.0; cells],
        });
        self.pairs.sort_by_key(|p| p.features);
        self.pairs.iter().position(|p| p.features == key).unwrap()
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<&PairEffect> {
        let key = [a.min(b), a.max(b)];
        self.pairs.iter().find(|p| p.features == key)
    }

    pub fn main_value(&self, feature: usize, x: f64) -> f64 {
        self.mains[feature][self.bins[feature].bin(x)]
    }

    pub fn pair_value(&self, pair: &PairEffect, row: &[f64]) -> f64 {
        let [a, b] = pair.features;
        let nb = pair.n_second(&self.bins);
        pair.values[self.bins[a].bin(row[a]) * nb + self.bins[b].bin(row[b])]
    }

    /// Intercept plus every main and pair component at `row`.
    pub fn margin(&self, row: &[f64]) -> f64 {
        let bins = self.bin_row(row);
        let mut m = self.intercept;
        for (j, main) in self.mains.iter().enumerate() {
            m += main[bins[j]];
        }
        for p in &self.pairs {
            let nb = p.n_second(&self.bins);
            m += p.values[bins[p.features[0]] * nb + bins[p.features[1]]];
        }
        m
    }

    /// Fill main and pair weights with bin frequencies over `rows`.
    pub fn set_weights<'a>(&mut self, rows: impl Iterator<Item = &'a [f64]>) {
        for w in &mut self.main_weights {
            w.fill(0.0);
        }
        for p in &mut self.pairs {
            p.weights.fill(0.0);
        }
        for row in rows {
            let bins = self.bin_row(row);
            for (j, w) in self.main_weights.iter_mut().enumerate() {
                w[bins[j]] += 1.0;
            }
            for p in &mut self.pairs {
                let nb = self.bins[p.features[1]].n_bins();
                p.weights[bins[p.features[0]] * nb + bins[p.features[1]]] += 1.0;
            }
        }
    }

    fn pair_marginals(&self, p: &PairEffect) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let na = self.bins[p.features[0]].n_bins();
        let nb = self.bins[p.features[1]].n_bins();
        let rows = (0..na)
            .map(|a| weighted_mean(&p.values[a * nb..(a + 1) * nb], &p.weights[a * nb..(a + 1) * nb]))
            .collect();
        let cols = (0..nb)
            .map(|b| {
                let v: Vec<f64> = (0..na).map(|a| p.values[a * nb + b]).collect();
                let w: Vec<f64> = (0..na).map(|a| p.weights[a * nb + b]).collect();
                weighted_mean(&v, &w)
            })
            .collect();
        (rows, cols)
    }

    /// Largest absolute weighted marginal mean: pair rows and columns and
    /// every main effect.
    pub fn max_marginal(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.pairs {
            let (r, c) = self.pair_marginals(p);
            for m in r.into_iter().chain(c).flatten() {
                worst = worst.max(m.abs());
            }
        }
        for (main, w) in self.mains.iter().zip(&self.main_weights) {
            if let Some(m) = weighted_mean(main, w) {
                worst = worst.max(m.abs());
            }
        }
        worst
    }

    /// Move weighted marginal means of pair tables into main effects and
    /// main-effect means into the intercept until every marginal vanishes.
    /// The function represented is unchanged at every grid cell.
    pub fn purify(&mut self) -> Result<PurifyReport> {
        if self.main_weights.iter().all(|w| w.iter().all(|v| *v == 0.0)) {
            return Err(Error::invalid("weights", "bin weights are not populated"));
        }
        let mut sweeps = 0;
        let mut max_marginal = self.max_marginal();
        while sweeps < PURIFY_MAX_SWEEPS {
            sweeps += 1;
            if max_marginal <= PURIFY_TOL {
                break;
            }
            for pi in 0..self.pairs.len() {
                let [a, b] = self.pairs[pi].features;
                let na = self.bins[a].n_bins();
                let nb = self.bins[b].n_bins();
                let (row_means, _) = self.pair_marginals(&self.pairs[pi]);
                for (ia, m) in row_means.iter().enumerate() {
                    if let Some(m) = m {
                        for ib in 0..nb {
                            self.pairs[pi].values[ia * nb + ib] -= m;
                        }
                        self.mains[a][ia] += m;
                    }
                }
                let (_, col_means) = self.pair_marginals(&self.pairs[pi]);
                for (ib, m) in col_means.iter().enumerate() {
                    if let Some(m) = m {
                        for ia in 0..na {
                            self.pairs[pi].values[ia * nb + ib] -= m;
                        }
                        self.mains[b][ib] += m;
                    }
                }
            }
            for j in 0..self.mains.len() {
                if let Some(m) = weighted_mean(&self.mains[j], &self.main_weights[j]) {
                    for v in &mut self.mains[j] {
                        *v -= m;
                    }
                    self.intercept += m;
                }
            }
            max_marginal = self.max_marginal();
        }
        let converged = max_marginal <= PURIFY_TOL;
        self.purified = converged;
        Ok(PurifyReport { sweeps, max_marginal, converged })
    }
}
