mod common;

use proptest::prelude::*;
use workbench_core::compare::competition_ranks;
use workbench_core::data::{data_quality, prepare, read_csv_from, write_csv_to, Column, Dataset, Partition, TaskKind};
use workbench_core::diagnose::{psi, resilience, robustness, ResilienceConfig, RobustnessConfig};
use workbench_core::explain::shap_with_background;
use workbench_core::interpret::{interpret_global, interpret_local};
use workbench_core::metrics::auc;
use workbench_core::models::{
    model_from_json, model_to_json, register_callable, register_scores, train, BoostModel, CallableModel, Family,
    GlmModel, GlmParams, ModelSpec, ScoreTable, TrainView, Xgb1Params, Xgb2Params,
};
use workbench_core::stats;

use common::{normals, numeric_dataset, rng};

/// Regression dataset with `d` standard normal features and a nonlinear target.
fn random_regression(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let xs: Vec<Vec<f64>> = (0..d).map(|_| normals(&mut r, n)).collect();
    let e = normals(&mut r, n);
    let y: Vec<f64> = (0..n)
        .map(|i| xs[0][i] + 0.5 * xs[d - 1][i] * xs[0][i] + (xs[d / 2][i]).sin() + 0.3 * e[i])
        .collect();
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    numeric_dataset(names.iter().map(|s| s.as_str()).zip(xs).collect(), y, TaskKind::Regression)
}

fn permute_rows(ds: &Dataset, perm: &[usize]) -> Dataset {
    let cols = ds
        .columns
        .iter()
        .map(|c| match c.levels() {
            Some(levels) => {
                let labels: Vec<&str> = perm.iter().map(|&i| levels[c.value(i) as usize].as_str()).collect();
                Column::categorical(c.name.clone(), &labels)
            }
            None => Column::numeric(c.name.clone(), perm.iter().map(|&i| c.value(i)).collect()),
        }
        .with_missing(perm.iter().map(|&i| c.missing[i]).collect()))
        .collect();
    let split = perm.iter().map(|&i| ds.split[i]).collect();
    Dataset::new(ds.name.clone(), cols, ds.target.clone(), ds.task).unwrap().with_split(split).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

fn pairwise_auc(y: &[f64], s: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for k in 0..y.len() {
            if y[i] == 1.0 && y[k] == 0.0 {
                den += 1.0;
                num += if s[i] > s[k] { 1.0 } else if s[i] == s[k] { 0.5 } else { 0.0 };
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_equals_pairwise(pairs in prop::collection::vec((any::<bool>(), 0u8..12), 2..60)) {
        let y: Vec<f64> = pairs.iter().map(|(b, _)| f64::from(*b)).collect();
        let s: Vec<f64> = pairs.iter().map(|(_, v)| f64::from(*v) / 4.0).collect();
        match (auc(&y, &s), pairwise_auc(&y, &s)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn quantiles_are_monotone_and_bounded(values in prop::collection::vec(-1e6f64..1e6, 1..80), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = (p.min(q), p.max(q));
        let a = stats::quantile(&values, lo);
        let b = stats::quantile(&values, hi);
        prop_assert!(a <= b);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= a && b <= max);
        prop_assert_eq!(stats::quantile(&values, 0.0), min);
        prop_assert_eq!(stats::quantile(&values, 1.0), max);
    }

    #[test]
    fn psi_is_nonnegative_and_zero_on_identity(counts in prop::collection::vec(0usize..50, 2..12), other in prop::collection::vec(0usize..50, 2..12)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        prop_assert_eq!(psi(&counts, &counts), 0.0);
        let k = counts.len().min(other.len());
        prop_assume!(other[..k].iter().sum::<usize>() > 0);
        prop_assert!(psi(&counts[..k], &other[..k]) >= 0.0);
    }

    #[test]
    fn ranks_follow_model_order(values in prop::collection::vec(prop::option::of(0u8..5), 2..4), higher in any::<bool>(), seed in any::<u64>()) {
        let vals: Vec<Option<f64>> = values.iter().map(|v| v.map(f64::from)).collect();
        let ranks = competition_ranks(&vals, higher);
        let perm = shuffled(vals.len(), seed);
        let permuted: Vec<Option<f64>> = perm.iter().map(|&i| vals[i]).collect();
        let pr = competition_ranks(&permuted, higher);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(pr[k], ranks[i]);
        }
        // rank = 1 + number of strictly better defined values
        for (i, v) in vals.iter().enumerate() {
            match v {
                None => prop_assert_eq!(ranks[i], None),
                Some(x) => {
                    let better = vals.iter().flatten().filter(|o| if higher { **o > *x } else { **o < *x }).count();
                    prop_assert_eq!(ranks[i], Some(better + 1));
                }
            }
        }
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((prop::option::of(-1e9f64..1e9), 0usize..3, -1e3f64..1e3), 3..40)) {
        let levels = ["red", "green", "blue, dark"];
        let mut num = Column::numeric("x", rows.iter().map(|r| r.0.unwrap_or(0.0)).collect());
        num = num.with_missing(rows.iter().map(|r| r.0.is_none()).collect());
        let labels: Vec<&str> = rows.iter().map(|r| levels[r.1]).collect();
        let ds = Dataset::new(
            "rt",
            vec![num, Column::categorical("c", &labels), Column::numeric("y", rows.iter().map(|r| r.2).collect())],
            "y",
            TaskKind::Regression,
        ).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        let back = read_csv_from(buf.as_slice(), "rt", "y", TaskKind::Regression).unwrap();
        prop_assert_eq!(back.columns.len(), 3);
        for (a, b) in ds.columns.iter().zip(&back.columns) {
            prop_assert_eq!(&a.missing, &b.missing);
            prop_assert_eq!(a.kind(), b.kind());
            for i in 0..ds.n_rows() {
                if !a.missing[i] {
                    prop_assert_eq!(a.cell_text(i), b.cell_text(i));
                }
            }
        }
        prop_assert_eq!(back.column("x").unwrap().values_f64().iter().zip(&ds.column("x").unwrap().values_f64())
            .filter(|(a, b)| a.to_bits() != b.to_bits()).count(), 0);
    }

    #[test]
    fn quality_counts_ignore_row_order(n in 5usize..60, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x: Vec<f64> = normals(&mut r, n).into_iter().map(|v| (v * 2.0).round()).collect();
        let labels: Vec<&str> = (0..n).map(|i| if x[i] > 0.0 { "p" } else { "q" }).collect();
        let ds = Dataset::new("q", vec![Column::numeric("x", x.clone()), Column::categorical("g", &labels), Column::numeric("y", x)], "y", TaskKind::Regression).unwrap();
        let p = permute_rows(&ds, &shuffled(n, seed ^ 1));
        prop_assert_eq!(data_quality(&ds), data_quality(&p));
    }

    #[test]
    fn prepare_is_pure(n in 10usize..80, ratio in 0.1f64..0.5, seed in any::<u64>()) {
        let ds = random_regression(n, 2, seed);
        let a = prepare(&ds, ratio, seed).unwrap();
        let b = prepare(&ds, ratio, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.train_rows().len() + a.test_rows().len(), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn glm_sweeps_never_raise_the_objective(seed in any::<u64>(), alpha in 0.0f64..0.3, l1 in 0.0f64..=1.0) {
        let ds = random_regression(150, 6, seed);
        let view = TrainView::from_dataset(&ds).unwrap();
        let (_, trace) = GlmModel::fit_traced(&view, &GlmParams { alpha, l1_ratio: l1, ..Default::default() }).unwrap();
        prop_assert!(trace.converged);
        for w in trace.objective.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-15), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(trace.kkt_residual <= 1e-6);
    }

    #[test]
    fn boosting_loss_never_rises(seed in any::<u64>(), lr in 0.05f64..=0.5) {
        let ds = random_regression(200, 3, seed);
        let view = TrainView::from_dataset(&ds).unwrap();
        let (_, t1) = BoostModel::fit_xgb1(&view, &Xgb1Params { learning_rate: lr, n_rounds: 40, validation_fraction: None, ..Default::default() }).unwrap();
        let (_, t2) = BoostModel::fit_xgb2(&view, &Xgb2Params { learning_rate: lr, n_rounds: 40, validation_fraction: None, ..Default::default() }).unwrap();
        for t in [t1, t2] {
            for w in t.train_loss.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn effects_match_trees_and_purify_keeps_predictions(seed in any::<u64>()) {
        let ds = random_regression(300, 3, seed);
        let view = TrainView::from_dataset(&ds).unwrap();
        let (raw, _) = BoostModel::fit_xgb2(&view, &Xgb2Params { n_rounds: 60, purify: false, ..Default::default() }).unwrap();
        let mut pure = raw.clone();
        pure.purify().unwrap();
        prop_assert!(pure.effects.max_marginal() <= 1e-8);
        for row in view.x.rows() {
            prop_assert!((raw.margin(row) - raw.ensemble_margin(row)).abs() <= 1e-10);
            prop_assert!((pure.margin(row) - raw.margin(row)).abs() <= 1e-10);
        }
    }

    #[test]
    fn every_family_round_trips_and_locals_add_up(seed in any::<u64>()) {
        let ds = prepare(&random_regression(120, 3, seed), 0.25, seed).unwrap();
        let frame = ds.frame(&ds.all_rows());
        for f in Family::ALL {
            let m = train(&ds, &ModelSpec::default_for(f), seed).unwrap();
            let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
            for row in frame.rows() {
                let (a, b) = (m.predict_row(row).unwrap(), back.predict_row(row).unwrap());
                prop_assert!((a - b).abs() <= 1e-15, "{f}: {a} vs {b}");
                let l = interpret_local(&m, row).unwrap();
                prop_assert!((l.score - m.margin_row(row).unwrap()).abs() <= 1e-10, "{f}");
                let sum = l.base + l.contributions.iter().map(|c| c.value).sum::<f64>();
                prop_assert!((sum - l.score).abs() <= 1e-10, "{f}");
            }
        }
    }

    #[test]
    fn global_importance_ignores_row_order(seed in any::<u64>()) {
        let ds = prepare(&random_regression(150, 3, seed), 0.2, seed).unwrap();
        let p = permute_rows(&ds, &shuffled(ds.n_rows(), seed));
        for f in Family::ALL {
            let m = train(&ds, &ModelSpec::default_for(f), 0).unwrap();
            let a = interpret_global(&m, &ds).unwrap();
            let b = interpret_global(&m, &p).unwrap();
            prop_assert_eq!(a.importance.len(), b.importance.len());
            for (x, y) in a.importance.iter().zip(&b.importance) {
                prop_assert_eq!(&x.name, &y.name);
                prop_assert!((x.importance - y.importance).abs() <= 1e-10, "{f}: {} vs {}", x.importance, y.importance);
            }
        }
    }

    #[test]
    fn glm_importance_ignores_feature_scale(seed in any::<u64>(), scale in 0.01f64..100.0, j in 0usize..3) {
        let ds = random_regression(200, 3, seed);
        let cols = ds.columns.iter().map(|c| {
            if c.name == format!("x{j}") { Column::numeric(c.name.clone(), c.values_f64().iter().map(|v| v * scale).collect()) } else { c.clone() }
        }).collect();
        let scaled = Dataset::new("s", cols, "y", TaskKind::Regression).unwrap();
        let imp = |d: &Dataset| {
            let m = train(d, &ModelSpec::Glm(GlmParams::default()), 0).unwrap();
            interpret_global(&m, d).unwrap().importance
        };
        let (a, b) = (imp(&ds), imp(&scaled));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.name, &y.name);
            prop_assert!((x.importance - y.importance).abs() <= 1e-8);
        }
    }

    #[test]
    fn shap_symmetry_and_dummy(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let a = normals(&mut r, 30);
        let z = normals(&mut r, 30);
        let ds = numeric_dataset(vec![("a", a.clone()), ("b", a), ("z", z)], normals(&mut r, 30), TaskKind::Regression);
        let m = register_callable(&ds, CallableModel::new("sym", move |x| c * x[0] * x[1] + (x[0] + x[1]).sin()));
        let x = ds.frame(&[0]).row(0).to_vec();
        let bg = ds.frame(&(1..30).collect::<Vec<_>>());
        let (_, phi, _) = shap_with_background(&m, &x, &bg, 0, 0).unwrap();
        prop_assert!((phi[0] - phi[1]).abs() <= 1e-10);
        prop_assert_eq!(phi[2], 0.0);
    }

    #[test]
    fn identity_points_equal_the_baseline(seed in any::<u64>()) {
        let ds = prepare(&random_regression(200, 3, seed), 0.5, seed).unwrap();
        let m = train(&ds, &ModelSpec::Glm(GlmParams::default()), 0).unwrap();
        let rb = robustness(&m, &ds, &RobustnessConfig { lambdas: vec![0.0, 0.2], repeats: 3, seed: Some(seed), ..Default::default() }).unwrap();
        prop_assert!(rb.levels[0].values.iter().all(|v| v.to_bits() == rb.baseline.to_bits()));
        prop_assert_eq!(&rb, &robustness(&m, &ds, &rb.config).unwrap());
        let cfg = ResilienceConfig { min_test_rows: 50, seed: Some(seed), ..Default::default() };
        let rs = resilience(&m, &ds, &cfg).unwrap();
        prop_assert_eq!(rs.curve[0].metric.unwrap().to_bits(), rs.baseline.to_bits());
        for w in rs.curve.windows(2) {
            prop_assert!(w[1].metric.unwrap() >= w[0].metric.unwrap());
        }
    }

    #[test]
    fn score_tables_answer_by_row(seed in any::<u64>()) {
        let ds = random_regression(40, 2, seed).with_split(vec![Partition::Test; 40]).unwrap();
        let scores: Vec<f64> = normals(&mut rng(seed ^ 7), 40);
        let m = register_scores(&ds, ScoreTable::new(&ds, scores.clone()).unwrap()).unwrap();
        let rows = shuffled(40, seed);
        prop_assert_eq!(m.score_rows(&ds, &rows).unwrap(), rows.iter().map(|&r| scores[r]).collect::<Vec<_>>());
    }
}
