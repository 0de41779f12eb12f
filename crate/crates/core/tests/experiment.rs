mod common;

use std::path::Path;

use serde_json::json;
use workbench_core::data::{write_csv, Column, Dataset, TaskKind};
use workbench_core::diagnose::{DiagnosticConfig, DiagnosticTest};
use workbench_core::experiment::{
    emit_report, run_pipeline, Analysis, AnalysisRequest, Experiment, ExplainMethod, ExplainRequest,
    Instance, Outcome, ReportBundle, EXPERIMENT_SCHEMA_VERSION,
};
use workbench_core::models::{Family, ModelSpec, ScoreTable};
use workbench_core::{Error, ErrorClass};

use common::{normals, rng, uniforms};

fn regression_data(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x1 = uniforms(&mut r, n, -2.0, 2.0);
    let x2 = uniforms(&mut r, n, -2.0, 2.0);
    let x3 = normals(&mut r, n);
    let eps = normals(&mut r, n);
    let groups: Vec<&str> = (0..n).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.5 * x1[i] - x2[i] * x2[i] + 0.5 * x3[i] + 0.3 * eps[i]).collect();
    Dataset::new(
        "synthetic",
        vec![
            Column::numeric("x1", x1),
            Column::numeric("x2", x2),
            Column::numeric("x3", x3),
            Column::categorical("g", &groups),
            Column::numeric("y", y),
        ],
        "y",
        TaskKind::Regression,
    )
    .unwrap()
}

fn write_fixture(dir: &Path, n: usize) {
    write_csv(&regression_data(n, 11), dir.join("data.csv")).unwrap();
}

fn write_pipeline(dir: &Path, config: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("pipeline.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn data_step() -> serde_json::Value {
    json!({"path": "data.csv", "target": "y", "task": "regression"})
}

fn full_config() -> serde_json::Value {
    json!({
        "seed": 7,
        "data": data_step(),
        "prepare": {"test_ratio": 0.25},
        "models": [
            {"id": "glm", "spec": {"family": "glm"}},
            {"id": "tree", "spec": {"family": "tree", "max_depth": 3}},
            {"id": "xgb2", "spec": {"family": "xgb2", "n_rounds": 30}}
        ],
        "interpret": [{"model": "glm"}, {"model": "tree", "instance": {"row": 3}}],
        "explain": [
            {"model": "xgb2", "method": "pfi", "repeats": 3},
            {"model": "xgb2", "method": "pdp", "features": ["x1", "x2"], "grid": 5},
            {"model": "glm", "method": "ale", "feature": "x2", "bins": 6},
            {"model": "tree", "method": "lime", "instance": {"row": 5}, "samples": 300},
            {"model": "xgb2", "method": "shap", "instance": {"values": {"x1": 0.5, "x2": -1.0, "x3": 0.0, "g": "a"}}, "background": 20}
        ],
        "diagnose": [
            {"test": "accuracy"},
            {"model": "xgb2", "test": "weakspot", "config": {"slice": {"features": ["x2"], "bins": 8}}},
            {"model": "glm", "test": "overfit", "config": {"slice": {"features": ["x1", "x2"], "bins": 3}}},
            {"model": "glm", "test": "reliability", "config": {"alpha": 0.2}},
            {"model": "tree", "test": "robustness", "config": {"repeats": 3}},
            {"model": "xgb2", "test": "resilience", "config": {"scenario": "worst_cluster", "clusters": 3, "restarts": 2}}
        ],
        "compare": [{"models": ["glm", "tree", "xgb2"], "tests": [{"test": "robustness", "config": {"repeats": 2}}, {"test": "resilience"}]}]
    })
}

fn with_dir(f: impl FnOnce(&Path)) {
    let dir = tempfile::tempdir().unwrap();
    f(dir.path());
}

#[test]
fn minimal_pipeline_gives_one_model_and_one_result() {
    with_dir(|dir| {
        write_fixture(dir, 200);
        let path = write_pipeline(
            dir,
            json!({"seed": 1, "data": data_step(), "models": [{"spec": {"family": "glm"}}], "diagnose": [{"test": "accuracy"}]}),
        );
        let exp = run_pipeline(&path).unwrap();
        assert_eq!(exp.models.len(), 1);
        assert_eq!(exp.results.len(), 1);
        let r = &exp.results[0];
        assert_eq!(r.key.model, "glm");
        assert_eq!(r.key.operation, "diagnose:accuracy");
        assert!(matches!(r.result(), Some(Analysis::Diagnostic(_))));
        let ds = exp.dataset().unwrap();
        assert_eq!(ds.test_rows().len(), 40);
    });
}

#[test]
fn full_pipeline_runs_every_step() {
    with_dir(|dir| {
        write_fixture(dir, 400);
        let exp = run_pipeline(&write_pipeline(dir, full_config())).unwrap();
        // 2 interpret + 5 explain + 3 accuracy + 5 targeted + 1 compare
        assert_eq!(exp.results.len(), 16);
        for r in &exp.results {
            assert!(r.error().is_none(), "{}: {:?}", r.key.operation, r.error());
        }
        let ops: Vec<&str> = exp.results.iter().map(|r| r.key.operation.as_str()).collect();
        assert_eq!(&ops[..2], &["interpret", "interpret:local"]);
        assert_eq!(ops.last(), Some(&"compare"));
    });
}

#[test]
fn pipeline_reports_are_deterministic_across_thread_counts() {
    with_dir(|dir| {
        write_fixture(dir, 400);
        let path = write_pipeline(dir, full_config());
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| emit_report(&run_pipeline(&path).unwrap()).unwrap().to_json().unwrap())
        };
        let a = run(1);
        let b = run(4);
        let c = run(4);
        assert_eq!(a, b);
        assert_eq!(b, c);
    });
}

#[test]
fn interpret_on_registered_model_is_recorded_as_an_error() {
    with_dir(|dir| {
        write_fixture(dir, 150);
        let scores: String = (0..150).map(|i| format!("{i},{}\n", i as f64 * 0.01)).collect();
        std::fs::write(dir.join("scores.csv"), format!("row_id,score\n{scores}")).unwrap();
        let path = write_pipeline(
            dir,
            json!({
                "data": data_step(),
                "models": [{"id": "ext", "scores": "scores.csv"}, {"spec": {"family": "glm"}}],
                "interpret": [{"model": "ext"}, {"model": "glm"}],
                "diagnose": [{"test": "accuracy"}]
            }),
        );
        let exp = run_pipeline(&path).unwrap();
        assert_eq!(exp.results.len(), 4);
        let bad = &exp.results[0];
        assert_eq!(bad.key.model, "ext");
        match &bad.outcome {
            Outcome::Error { class, message } => {
                assert_eq!(*class, ErrorClass::Capability);
                assert!(message.contains("interpret not supported"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(exp.results[1..].iter().all(|r| r.error().is_none()));
    });
}

#[test]
fn invalid_pipeline_names_the_offending_key() {
    with_dir(|dir| {
        write_fixture(dir, 50);
        let path = write_pipeline(
            dir,
            json!({"data": data_step(), "models": [{"spec": {"family": "glm", "alpha": "big"}}]}),
        );
        match run_pipeline(&path).unwrap_err() {
            Error::InvalidConfig { path, .. } => assert!(path.starts_with("models[0].spec"), "{path}"),
            other => panic!("{other:?}"),
        }
        let path = write_pipeline(dir, json!({"data": {"path": "missing.csv", "target": "y", "task": "regression"}}));
        assert_eq!(run_pipeline(&path).unwrap_err().class(), ErrorClass::Data);
    });
}

fn experiment_with_every_family() -> Experiment {
    let mut exp = Experiment::new(5);
    exp.set_data(regression_data(300, 3), "memory").unwrap();
    exp.prepare(0.2).unwrap();
    for family in Family::ALL {
        exp.train_model(None, ModelSpec::default_for(family)).unwrap();
    }
    let scores: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
    let table = ScoreTable::new(exp.dataset().unwrap(), scores).unwrap();
    exp.register_scores(Some("ext".into()), table, "memory").unwrap();
    exp.run(AnalysisRequest::Interpret { model: "gam".into(), instance: None }).unwrap();
    let mut pfi = ExplainRequest::new(ExplainMethod::Pfi);
    pfi.repeats = Some(2);
    exp.run(AnalysisRequest::Explain { model: "xgb1".into(), request: pfi }).unwrap();
    exp.run(AnalysisRequest::Diagnose {
        model: "ext".into(),
        diagnostic: DiagnosticConfig::from_json(DiagnosticTest::Weakspot, json!({"slice": {"features": ["x1"]}})).unwrap(),
    })
    .unwrap();
    exp
}

#[test]
fn save_load_round_trips_every_family() {
    with_dir(|dir| {
        let exp = experiment_with_every_family();
        let path = dir.join("exp.json");
        exp.save(&path).unwrap();
        let back = Experiment::load(&path).unwrap();
        assert_eq!(back, exp);
        let ds = back.dataset().unwrap();
        let rows = ds.all_rows();
        for (a, b) in exp.models.iter().zip(&back.models) {
            let pa = a.model.score_rows(ds, &rows).unwrap();
            let pb = b.model.score_rows(ds, &rows).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                assert!((x - y).abs() <= 1e-15, "{}: {x} vs {y}", a.id);
            }
        }
    });
}

#[test]
fn damaged_files_are_rejected() {
    with_dir(|dir| {
        let mut exp = Experiment::new(2);
        exp.set_data(regression_data(60, 1), "memory").unwrap();
        exp.prepare(0.2).unwrap();
        exp.train_model(None, ModelSpec::default_for(Family::Glm)).unwrap();
        let text = exp.to_json().unwrap();

        let truncated = &text[..text.len() / 2];
        assert!(matches!(Experiment::from_json(truncated), Err(Error::Corrupted(_))));

        let path = dir.join("t.json");
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(Experiment::load(&path), Err(Error::Corrupted(_))));

        let tampered = text.replacen("\"seed\": 2", "\"seed\": 3", 1);
        assert_ne!(tampered, text);
        assert!(matches!(Experiment::from_json(&tampered), Err(Error::Corrupted(_))));

        let future = text.replacen(
            &format!("\"schema_version\": {EXPERIMENT_SCHEMA_VERSION}"),
            "\"schema_version\": 99",
            1,
        );
        let err = Experiment::from_json(&future).unwrap_err();
        assert!(matches!(err, Error::Migration { found: 99, supported: 1 }));
        let msg = err.to_string();
        assert!(msg.contains("99") && msg.contains('1'), "{msg}");
    });
}

#[test]
fn results_are_append_only() {
    let mut exp = Experiment::new(9);
    exp.set_data(regression_data(200, 4), "memory").unwrap();
    exp.prepare(0.2).unwrap();
    exp.train_model(None, ModelSpec::default_for(Family::Glm)).unwrap();
    let mut req = ExplainRequest::new(ExplainMethod::Pfi);
    req.repeats = Some(2);
    let first = exp.run(AnalysisRequest::Explain { model: "glm".into(), request: req.clone() }).unwrap().clone();
    let again = exp.run(AnalysisRequest::Explain { model: "glm".into(), request: req.clone() }).unwrap().clone();
    assert_eq!(first, again);
    assert_eq!(exp.results.len(), 1);
    req.repeats = Some(3);
    exp.run(AnalysisRequest::Explain { model: "glm".into(), request: req }).unwrap();
    assert_eq!(exp.results.len(), 2);
    assert_ne!(exp.results[0].key.config_hash, exp.results[1].key.config_hash);
    assert_eq!(exp.results[0], first);

    // the stored request carries the seed actually used
    match &exp.results[0].request {
        AnalysisRequest::Explain { request, .. } => assert_eq!(request.seed, Some(9)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_models_and_missing_instances_become_error_entries() {
    let mut exp = Experiment::new(1);
    exp.set_data(regression_data(100, 4), "memory").unwrap();
    exp.prepare(0.2).unwrap();
    exp.train_model(None, ModelSpec::default_for(Family::Glm)).unwrap();
    let e = exp.run(AnalysisRequest::Interpret { model: "nope".into(), instance: None }).unwrap();
    assert!(e.error().unwrap().contains("nope"));
    let e = exp.run(AnalysisRequest::Explain { model: "glm".into(), request: ExplainRequest::new(ExplainMethod::Shap) }).unwrap();
    assert!(e.error().unwrap().contains("instance"));
    let e = exp
        .run(AnalysisRequest::Interpret { model: "glm".into(), instance: Some(Instance { row: Some(1), values: None }) })
        .unwrap();
    assert!(e.error().is_none());
}

#[test]
fn report_bundles() {
    let mut exp = Experiment::new(3);
    exp.set_data(regression_data(120, 8), "memory").unwrap();
    exp.prepare(0.25).unwrap();
    exp.train_model(None, ModelSpec::default_for(Family::Glm)).unwrap();
    assert_eq!(emit_report(&exp).unwrap_err().class(), ErrorClass::Data);

    exp.run(AnalysisRequest::Diagnose { model: "glm".into(), diagnostic: DiagnosticConfig::from_json(DiagnosticTest::Accuracy, json!(null)).unwrap() })
        .unwrap();
    let bundle = emit_report(&exp).unwrap();
    assert_eq!(bundle.entries().count(), 1);
    assert_eq!(bundle.diagnostics.len(), 1);
    assert!(bundle.interpretations.is_empty() && bundle.explanations.is_empty() && bundle.comparisons.is_empty());

    let text = bundle.to_json().unwrap();
    assert!(!text.contains("created_at"));
    let back = ReportBundle::validate(&text).unwrap();
    assert_eq!(back, bundle);

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["diagnostics"][0]["key"]["config_hash"] = json!("0000");
    assert!(ReportBundle::validate(&value.to_string()).is_err());
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["extra"] = json!(1);
    assert!(ReportBundle::validate(&value.to_string()).is_err());
}

#[test]
fn data_cannot_change_under_models() {
    let mut exp = Experiment::new(1);
    exp.set_data(regression_data(50, 1), "memory").unwrap();
    exp.prepare(0.2).unwrap();
    exp.train_model(None, ModelSpec::default_for(Family::Glm)).unwrap();
    let err = exp.set_data(regression_data(50, 2), "other").unwrap_err();
    assert_eq!(err.class(), ErrorClass::Conflict);
}
