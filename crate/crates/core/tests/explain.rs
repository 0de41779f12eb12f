mod common;

use common::*;
use workbench_core::data::{Dataset, Frame, Partition, TaskKind};
use workbench_core::explain::*;
use workbench_core::metrics::Metric;
use workbench_core::models::{
    register_callable, register_scores, train, CallableModel, GlmParams, ModelBody, ModelSpec,
    ScoreTable, TrainedModel,
};
use workbench_core::stats;

fn callable(ds: &Dataset, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> TrainedModel {
    register_callable(ds, CallableModel::new("f", f))
}

fn all_test(ds: Dataset) -> Dataset {
    let n = ds.n_rows();
    ds.with_split(vec![Partition::Test; n]).unwrap()
}

fn glm_fixture() -> (Dataset, TrainedModel, Vec<f64>) {
    let ds = linear_dataset(400, &[2.0, -0.7, 1.5], 1.0, 0.5, 11);
    let m = train(&ds, &ModelSpec::Glm(GlmParams::default()), 0).unwrap();
    let ModelBody::Glm(g) = &m.body else { unreachable!() };
    let beta = g.coefficients.clone();
    (ds, m, beta)
}

#[test]
fn glm_pdp_and_ale_slopes_equal_coefficients() {
    let (ds, m, beta) = glm_fixture();
    for (j, b) in beta.iter().enumerate() {
        let name = format!("x{}", j + 1);
        let PdpResult::Curve { grid, values, .. } = pdp(&m, &ds, &[name.clone()], PDP_GRID).unwrap() else { panic!() };
        assert_eq!(grid.len(), PDP_GRID);
        for k in 1..grid.len() {
            let slope = (values[k] - values[k - 1]) / (grid[k] - grid[k - 1]);
            assert!((slope - b).abs() < 1e-8, "pdp slope {slope} vs {b}");
        }
        let a = ale(&m, &ds, &name, ALE_BINS).unwrap();
        assert_eq!(a.counts.len(), a.edges.len() - 1);
        assert_eq!(a.counts.iter().sum::<usize>(), ds.train_rows().len());
        for k in 1..a.edges.len() {
            let slope = (a.values[k] - a.values[k - 1]) / (a.edges[k] - a.edges[k - 1]);
            assert!((slope - b).abs() < 1e-8, "ale slope {slope} vs {b}");
        }
    }
}

#[test]
fn linear_shap_matches_closed_form() {
    let (ds, m, beta) = glm_fixture();
    let x = ds.frame(&[ds.test_rows()[3]]).row(0).to_vec();
    let e = shap_explain(&m, &ds, &x, SHAP_BACKGROUND, 5).unwrap();
    assert_eq!(e.mode, ShapMode::Exact);
    assert_eq!(e.background_rows.len(), SHAP_BACKGROUND);
    let bg = ds.frame(&e.background_rows);
    for (j, b) in beta.iter().enumerate() {
        let expected = b * (x[j] - stats::mean(&bg.column(j)));
        assert!((e.values[j].phi - expected).abs() < 1e-10);
    }
    let total = e.base_value + e.values.iter().map(|v| v.phi).sum::<f64>();
    assert!((total - e.prediction).abs() < 1e-10);
}

/// Shapley values by averaging marginal contributions over all orderings.
fn permutation_oracle(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &Frame) -> (f64, Vec<f64>) {
    let d = x.len();
    let v = |set: &[usize]| {
        let mut total = 0.0;
        for b in bg.rows() {
            let row: Vec<f64> = (0..d).map(|j| if set.contains(&j) { x[j] } else { b[j] }).collect();
            total += f(&row);
        }
        total / bg.n_rows() as f64
    };
    fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut p in perms(rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }
    let orders = perms((0..d).collect());
    let mut phi = vec![0.0; d];
    for order in &orders {
        for (pos, &j) in order.iter().enumerate() {
            let before = &order[..pos];
            let mut with: Vec<usize> = before.to_vec();
            with.push(j);
            phi[j] += v(&with) - v(before);
        }
    }
    for p in &mut phi {
        *p /= orders.len() as f64;
    }
    (v(&[]), phi)
}

#[test]
fn exact_shap_equals_permutation_oracle() {
    let mut r = rng(3);
    let cols: Vec<Vec<f64>> = (0..4).map(|_| normals(&mut r, 40)).collect();
    let y = normals(&mut r, 40);
    let ds = numeric_dataset(vec![("a", cols[0].clone()), ("b", cols[1].clone()), ("c", cols[2].clone()), ("d", cols[3].clone())], y, TaskKind::Regression);
    let f = |x: &[f64]| x[0].sin() * x[1] + x[2] * x[2] - (0.1 * x[3]).exp() * x[0] + (x[1] * x[3]).tanh();
    let m = callable(&ds, f);
    let bg = ds.frame(&(0..25).collect::<Vec<_>>());
    let x = ds.frame(&[33]).row(0).to_vec();
    let (b0, phi, mode) = shap_with_background(&m, &x, &bg, 0, 0).unwrap();
    assert_eq!(mode, ShapMode::Exact);
    let (ob0, ophi) = permutation_oracle(&f, &x, &bg);
    assert!((b0 - ob0).abs() < 1e-10);
    for j in 0..4 {
        assert!((phi[j] - ophi[j]).abs() < 1e-10, "{j}: {} vs {}", phi[j], ophi[j]);
    }
    assert!((b0 + phi.iter().sum::<f64>() - f(&x)).abs() < 1e-10);
}

#[test]
fn shap_symmetry_and_dummy() {
    let mut r = rng(8);
    let a = normals(&mut r, 60);
    let c = normals(&mut r, 60);
    let ds = numeric_dataset(vec![("a", a.clone()), ("b", a.clone()), ("c", c)], normals(&mut r, 60), TaskKind::Regression);
    let m = callable(&ds, |x| x[0] * x[1] + (x[0] + x[1]).cos());
    let x = ds.frame(&[7]).row(0).to_vec();
    let bg = ds.frame(&(20..50).collect::<Vec<_>>());
    let (_, phi, _) = shap_with_background(&m, &x, &bg, 0, 0).unwrap();
    assert!((phi[0] - phi[1]).abs() < 1e-10);
    assert_eq!(phi[2], 0.0);
}

#[test]
fn kernel_shap_recovers_linear_values_and_efficiency() {
    let d = 14;
    let mut r = rng(21);
    let cols: Vec<Vec<f64>> = (0..d).map(|_| normals(&mut r, 80)).collect();
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let ds = numeric_dataset(names.iter().map(|s| s.as_str()).zip(cols).collect(), normals(&mut r, 80), TaskKind::Regression);
    let beta: Vec<f64> = (0..d).map(|j| (j as f64 - 6.0) / 3.0).collect();
    let b2 = beta.clone();
    let m = callable(&ds, move |x| x.iter().zip(&b2).map(|(a, b)| a * b).sum());
    let x = ds.frame(&[5]).row(0).to_vec();
    let e = shap_explain(&m, &ds, &x, 50, 9).unwrap();
    assert_eq!(e.mode, ShapMode::Sampled);
    let bg = ds.frame(&e.background_rows);
    for j in 0..d {
        let expected = beta[j] * (x[j] - stats::mean(&bg.column(j)));
        assert!((e.values[j].phi - expected).abs() < 1e-6, "{j}");
    }
    let total = e.base_value + e.values.iter().map(|v| v.phi).sum::<f64>();
    assert!((total - e.prediction).abs() < 1e-6);
    assert_eq!(e, shap_explain(&m, &ds, &x, 50, 9).unwrap());
}

#[test]
fn pdp_equals_brute_force_double_loop() {
    let mut r = rng(4);
    let ds = all_test(numeric_dataset(
        vec![("u", uniforms(&mut r, 50, -2.0, 2.0)), ("v", uniforms(&mut r, 50, 0.0, 1.0))],
        normals(&mut r, 50),
        TaskKind::Regression,
    ));
    let f = |x: &[f64]| (x[0] * x[1]).sin() + x[0].powi(3);
    let m = callable(&ds, f);
    let frame = ds.frame(&ds.all_rows());
    let PdpResult::Curve { grid, values, .. } = pdp(&m, &ds, &["u".into()], 5).unwrap() else { panic!() };
    let sorted = stats::sorted(&frame.column(0));
    for k in 0..5 {
        let g = stats::quantile_sorted(&sorted, k as f64 / 4.0);
        assert_eq!(grid[k], g);
        let mut total = 0.0;
        for row in frame.rows() {
            total += f(&[g, row[1]]);
        }
        assert!((values[k] - total / 50.0).abs() < 1e-12);
    }
    let PdpResult::Surface { first_grid, second_grid, values, .. } = pdp(&m, &ds, &["u".into(), "v".into()], 5).unwrap() else { panic!() };
    for (i, a) in first_grid.iter().enumerate() {
        for (k, b) in second_grid.iter().enumerate() {
            let brute = (0..50).map(|_| f(&[*a, *b])).sum::<f64>() / 50.0;
            assert!((values[i * second_grid.len() + k] - brute).abs() < 1e-12);
        }
    }
}

#[test]
fn ale_hand_computed_three_bins() {
    let x: Vec<f64> = (1..=12).map(f64::from).collect();
    let ds = numeric_dataset(vec![("x", x), ("z", vec![0.0; 12])], (0..12).map(f64::from).collect(), TaskKind::Regression);
    let m = callable(&ds, |r| r[0] * r[0]);
    let a = ale(&m, &ds, "x", 3).unwrap();
    // edges at the type-7 thirds of 1..12: 1, 14/3, 25/3, 12
    let edges = [1.0, 14.0 / 3.0, 25.0 / 3.0, 12.0];
    for (e, h) in a.edges.iter().zip(edges) {
        assert!((e - h).abs() < 1e-12);
    }
    assert_eq!(a.counts, vec![4, 4, 4]);
    // accumulated: 0, 187/9, 616/9, 1287/9; centered by 2893/54
    let expected = [0.0, 187.0 / 9.0, 616.0 / 9.0, 1287.0 / 9.0].map(|v| v - 2893.0 / 54.0);
    for (v, h) in a.values.iter().zip(expected) {
        assert!((v - h).abs() < 1e-10, "{v} vs {h}");
    }
}

#[test]
fn ale_of_additive_model_reproduces_component() {
    let mut r = rng(12);
    let ds = numeric_dataset(
        vec![("a", uniforms(&mut r, 300, -3.0, 3.0)), ("b", normals(&mut r, 300))],
        normals(&mut r, 300),
        TaskKind::Regression,
    );
    let m = callable(&ds, |x| x[0].sin() * 2.0 + (x[1] * 0.5).exp());
    let a = ale(&m, &ds, "a", ALE_BINS).unwrap();
    let g = |v: f64| v.sin() * 2.0;
    for k in 0..a.edges.len() {
        let want = g(a.edges[k]) - g(a.edges[0]);
        assert!((a.values[k] - a.values[0] - want).abs() < 1e-8);
    }
    let mids: f64 = (0..a.counts.len())
        .map(|k| a.counts[k] as f64 * 0.5 * (a.values[k] + a.values[k + 1]))
        .sum();
    assert!(mids.abs() / 300.0 < 1e-10);
}

#[test]
fn pfi_zero_for_ignored_feature_and_matches_recomputation() {
    let ds = linear_dataset(300, &[1.0, 0.0, 0.5], 0.0, 0.3, 5);
    let m = callable(&ds, |x| x[0] + 0.5 * x[2]);
    let res = pfi(&m, &ds, Metric::Mse, PFI_REPEATS, 77).unwrap();
    assert!(res.features[1].degradations.iter().all(|d| *d == 0.0));
    assert!(res.features[0].mean > 0.0);
    let rows = ds.test_rows();
    let frame = ds.frame(&rows);
    let y = ds.targets_of(&rows);
    let base: f64 = frame.rows().zip(&y).map(|(r, t)| (r[0] + 0.5 * r[2] - t).powi(2)).sum::<f64>() / y.len() as f64;
    for rep in 0..PFI_REPEATS {
        let perm = permuted_column(&frame.column(0), 77, 0, rep);
        let mse: f64 = frame.rows().zip(&y).zip(&perm).map(|((r, t), p)| (p + 0.5 * r[2] - t).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((res.features[0].degradations[rep] - (mse - base)).abs() < 1e-12);
    }
    // score metrics are flipped so larger still means more important
    let r2 = pfi(&m, &ds, Metric::R2, 2, 77).unwrap();
    assert!(r2.features[0].mean > 0.0);
    assert_eq!(res, pfi(&m, &ds, Metric::Mse, PFI_REPEATS, 77).unwrap());
}

#[test]
fn lime_on_linear_model() {
    let ds = linear_dataset(300, &[3.0, 0.0, 0.0], 0.0, 0.1, 2);
    let m = callable(&ds, |x| 3.0 * x[0] - 1.0);
    let x = ds.frame(&[4]).row(0).to_vec();
    let opts = LimeOptions { seed: 13, ..Default::default() };
    let e = lime_explain(&m, &ds, &x, &opts).unwrap();
    assert_eq!(e.terms[0].name, "x1");
    assert!((e.terms[0].coefficient - 3.0).abs() < 1e-2);
    assert!(e.weighted_r2.unwrap() >= 0.99);
    assert!((e.kernel_width - 0.75 * 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(e.prediction, 3.0 * x[0] - 1.0);
    assert_eq!(e, lime_explain(&m, &ds, &x, &opts).unwrap());
    let limited = lime_explain(&m, &ds, &x, &LimeOptions { top_k: 1, ..opts }).unwrap();
    assert_eq!(limited.terms.len(), 1);
}

#[test]
fn score_tables_cannot_be_explained() {
    let ds = linear_dataset(50, &[1.0], 0.0, 0.1, 1);
    let m = register_scores(&ds, ScoreTable::new(&ds, vec![0.0; 50]).unwrap()).unwrap();
    let x = vec![0.0];
    assert!(pfi(&m, &ds, Metric::Mse, 1, 0).is_err());
    assert!(pdp(&m, &ds, &["x1".into()], 5).is_err());
    assert!(ale(&m, &ds, "x1", 5).is_err());
    assert!(lime_explain(&m, &ds, &x, &LimeOptions::default()).is_err());
    let err = shap_explain(&m, &ds, &x, 10, 0).unwrap_err();
    assert_eq!(err.class(), workbench_core::ErrorClass::Capability);
}
