//! Side-by-side comparison of two or three models on one dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::diagnose::{
    accuracy, run_diagnostic, AccuracyConfig, DiagnosticConfig, DiagnosticResult, DiagnosticTest,
};
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricSet};
use crate::models::TrainedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub train: MetricSet,
    pub test: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: String,
    pub result: Option<DiagnosticResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedTest {
    pub test: DiagnosticTest,
    pub config: DiagnosticConfig,
    pub outcomes: Vec<ModelOutcome>,
}

/// One curve per model over a shared x grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedCurve {
    pub name: String,
    pub x: Vec<f64>,
    /// `series[m][i]` is model `m` at `x[i]`.
    pub series: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub criterion: String,
    pub higher_is_better: bool,
    pub values: Vec<Option<f64>>,
    /// Competition ranks: 1 is best and tied values share the better rank.
    pub ranks: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRank {
    pub model: String,
    pub mean_rank: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<String>,
    pub metrics: Vec<ModelMetrics>,
    pub tests: Vec<ComparedTest>,
    pub curves: Vec<AlignedCurve>,
    pub ranks: Vec<RankRow>,
    pub overall: Vec<OverallRank>,
}

/// Competition ranking of `values`; `None` values stay unranked.
pub fn competition_ranks(values: &[Option<f64>], higher_is_better: bool) -> Vec<Option<usize>> {
    let better = |a: f64, b: f64| if higher_is_better { a > b } else { a < b };
    values
        .iter()
        .map(|v| {
            v.map(|x| 1 + values.iter().filter(|o| o.is_some_and(|y| better(y, x))).count())
        })
        .collect()
}

/// Headline number of a diagnostic for ranking, with its orientation.
fn summary(result: &DiagnosticResult) -> Option<(String, f64, bool)> {
    match result {
        DiagnosticResult::Accuracy(_) => None,
        DiagnosticResult::Weakspot(r) => Some(("weakspot: weak slices".into(), r.slices.iter().filter(|s| s.weak).count() as f64, false)),
        DiagnosticResult::Overfit(r) => {
            Some(("overfit: overfit slices".into(), r.slices.iter().filter(|s| s.overfit).count() as f64, false))
        }
        DiagnosticResult::Reliability(r) => match (r.mean_width, r.mean_set_size) {
            (Some(w), _) => Some(("reliability: mean width".into(), w, false)),
            (None, Some(s)) => Some(("reliability: mean set size".into(), s, false)),
            _ => None,
        },
        DiagnosticResult::Robustness(r) => {
            let last = r.levels.iter().max_by(|a, b| a.lambda.total_cmp(&b.lambda))?;
            Some((format!("robustness: {} at lambda {}", r.metric, last.lambda), last.mean, !r.metric.is_loss()))
        }
        DiagnosticResult::Resilience(r) => {
            let worst = r.curve.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio))?;
            Some((format!("resilience: {} at ratio {}", r.metric, worst.ratio), worst.metric?, !r.metric.is_loss()))
        }
        DiagnosticResult::Fairness(r) => {
            let min_air = r.groups.iter().filter(|g| !g.reference).filter_map(|g| g.air).min_by(f64::total_cmp)?;
            Some(("fairness: |1 - min AIR|".into(), (1.0 - min_air).abs(), false))
        }
    }
}

fn aligned(name: &str, per_model: Vec<Option<Vec<(f64, Option<f64>)>>>) -> Option<AlignedCurve> {
    let x: Vec<f64> = per_model.iter().flatten().next()?.iter().map(|p| p.0).collect();
    let series = per_model
        .into_iter()
        .map(|c| match c {
            Some(points) => x.iter().map(|xv| points.iter().find(|p| p.0 == *xv).and_then(|p| p.1)).collect(),
            None => vec![None; x.len()],
        })
        .collect();
    Some(AlignedCurve { name: name.into(), x, series })
}

/// Compare 2 or 3 models on the same dataset and split, running each
/// requested diagnostic with identical configuration and seed. The overall
/// rank orders models by their mean per-criterion rank, with ties broken by
/// the primary test metric.
pub fn model_compare(
    models: &[(String, &TrainedModel)],
    ds: &Dataset,
    tests: &[DiagnosticConfig],
    seed: u64,
) -> Result<ComparisonReport> {
    if !(2..=3).contains(&models.len()) {
        return Err(Error::invalid("models", format!("compare takes 2 or 3 models, got {}", models.len())));
    }
    for (id, m) in models {
        if m.task() != ds.task {
            return Err(Error::invalid("models", format!("model `{id}` is a {} model but the dataset is {}", m.task(), ds.task)));
        }
    }
    let names: Vec<String> = models.iter().map(|(id, _)| id.clone()).collect();
    let metrics = models
        .par_iter()
        .map(|(id, m)| {
            let a = accuracy(m, ds, &AccuracyConfig::default())?;
            Ok(ModelMetrics { model: id.clone(), train: a.train_metrics, test: a.test_metrics })
        })
        .collect::<Result<Vec<_>>>()?;

    let compared: Vec<ComparedTest> = tests
        .iter()
        .filter(|c| c.test() != DiagnosticTest::Accuracy)
        .map(|c| {
            let config = c.clone().with_seed(seed);
            let outcomes = models
                .par_iter()
                .map(|(id, m)| match run_diagnostic(m, ds, &config, seed) {
                    Ok(r) => ModelOutcome { model: id.clone(), result: Some(r), error: None },
                    Err(e) => ModelOutcome { model: id.clone(), result: None, error: Some(e.to_string()) },
                })
                .collect();
            ComparedTest { test: config.test(), config, outcomes }
        })
        .collect();

    let task_metrics: &[Metric] = match ds.task {
        TaskKind::Regression => &Metric::REGRESSION,
        TaskKind::Binary => &Metric::BINARY,
    };
    let mut ranks: Vec<RankRow> = task_metrics
        .iter()
        .map(|&metric| {
            let values: Vec<Option<f64>> = metrics.iter().map(|m| m.test.get(metric)).collect();
            let higher = !metric.is_loss();
            RankRow { criterion: format!("test {metric}"), higher_is_better: higher, ranks: competition_ranks(&values, higher), values }
        })
        .collect();
    let mut curves = Vec::new();
    for t in &compared {
        let results: Vec<Option<&DiagnosticResult>> = t.outcomes.iter().map(|o| o.result.as_ref()).collect();
        let criterion = results.iter().flatten().find_map(|r| summary(r));
        if let Some((criterion, _, higher)) = criterion {
            let values: Vec<Option<f64>> = results.iter().map(|r| r.and_then(summary).map(|s| s.1)).collect();
            ranks.push(RankRow { criterion, higher_is_better: higher, ranks: competition_ranks(&values, higher), values });
        }
        let curve = match t.test {
            DiagnosticTest::Robustness => aligned(
                "robustness",
                results
                    .iter()
                    .map(|r| match r {
                        Some(DiagnosticResult::Robustness(x)) => Some(x.levels.iter().map(|l| (l.lambda, Some(l.mean))).collect()),
                        _ => None,
                    })
                    .collect(),
            ),
            DiagnosticTest::Resilience => aligned(
                "resilience",
                results
                    .iter()
                    .map(|r| match r {
                        Some(DiagnosticResult::Resilience(x)) => Some(x.curve.iter().map(|p| (p.ratio, p.metric)).collect()),
                        _ => None,
                    })
                    .collect(),
            ),
            DiagnosticTest::Reliability => aligned(
                "reliability width",
                results
                    .iter()
                    .map(|r| match r {
                        Some(DiagnosticResult::Reliability(x)) => Some(vec![(x.config.alpha, x.mean_width.or(x.mean_set_size))]),
                        _ => None,
                    })
                    .collect(),
            ),
            _ => None,
        };
        curves.extend(curve);
    }

    let n = models.len();
    let mean_rank: Vec<Option<f64>> = (0..n)
        .map(|m| {
            let rs: Vec<f64> = ranks.iter().filter_map(|row| row.ranks[m]).map(|r| r as f64).collect();
            (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
        })
        .collect();
    let primary = Metric::primary(ds.task);
    let tiebreak: Vec<Option<f64>> = metrics.iter().map(|m| m.test.get(primary)).collect();
    let tiebreak_rank = competition_ranks(&tiebreak, !primary.is_loss());
    let key = |m: usize| (mean_rank[m].unwrap_or(f64::INFINITY), tiebreak_rank[m].unwrap_or(usize::MAX));
    let overall = (0..n)
        .map(|m| {
            let (mr, tb) = key(m);
            let better = (0..n).filter(|&o| {
                let (omr, otb) = key(o);
                omr < mr || (omr == mr && otb < tb)
            });
            OverallRank { model: names[m].clone(), mean_rank: mean_rank[m], rank: 1 + better.count() }
        })
        .collect();

    Ok(ComparisonReport { models: names, metrics, tests: compared, curves, ranks, overall })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_the_better_rank() {
        let r = competition_ranks(&[Some(1.0), Some(0.5), Some(1.0)], false);
        assert_eq!(r, vec![Some(2), Some(1), Some(2)]);
        let r = competition_ranks(&[Some(0.9), None, Some(0.9)], true);
        assert_eq!(r, vec![Some(1), None, Some(1)]);
    }
}
