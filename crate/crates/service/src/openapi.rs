use serde_json::{json, Value};

fn op(summary: &str, ok: &str, errors: &[&str]) -> Value {
    let mut responses = serde_json::Map::new();
    responses.insert(ok.into(), json!({"description": "success"}));
    for code in errors {
        let description = match *code {
            "400" => "invalid body or missing data; `field` names the offending key",
            "404" => "unknown model or job",
            "409" => "conflicting or concurrent mutation",
            "422" => "the model lacks a required capability",
            _ => "error",
        };
        responses.insert((*code).into(), json!({"description": description}));
    }
    json!({"summary": summary, "responses": responses})
}

/// OpenAPI description of the routes in `api::router`.
pub fn document() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {"title": "workbench", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/api/spec": {"get": op("This document", "200", &[])},
            "/api/experiment": {"get": op("Dataset, models and result keys", "200", &[])},
            "/api/data/load": {"post": op("Load a CSV: {path, target, task}", "200", &["400", "409"])},
            "/api/data/prepare": {"post": op("Clean and split: {test_ratio}", "200", &["400", "409"])},
            "/api/data/summary": {"get": op("Per-column summary", "200", &["400"])},
            "/api/data/quality": {"get": op("Missing values, outliers, duplicates", "200", &["400"])},
            "/api/models": {"get": op("Models in the experiment", "200", &[])},
            "/api/models/train": {"post": op("Train {family, params?, id?}; returns {job_id}", "202", &["400", "409"])},
            "/api/models/register": {"post": op("Register a row_id,score table: {scores, id?}", "200", &["400", "409"])},
            "/api/interpret": {"post": op("Inherent interpretation {model, instance?}; returns {job_id}", "202", &["400", "404", "422"])},
            "/api/explain": {"post": op("Post-hoc explanation {model, method, ...}; returns {job_id}", "202", &["400", "404", "422"])},
            "/api/diagnose/{test}": {"post": {
                "parameters": [{"name": "test", "in": "path", "required": true, "schema": {"type": "string",
                    "enum": ["accuracy", "weakspot", "overfit", "reliability", "robustness", "resilience", "fairness"]}}],
                "summary": "Run a diagnostic {model, config}; returns {job_id}",
                "responses": op("", "202", &["400", "404", "422"])["responses"].clone(),
            }},
            "/api/compare": {"post": op("Compare {models, tests}; returns {job_id}", "202", &["400", "404"])},
            "/api/jobs/{id}": {"get": op("Job status: queued, running, done or failed, with the result when finished", "200", &["404"])},
            "/api/jobs/{id}/result": {"get": op("The finished job's result, byte-identical to CLI JSON output", "200", &["404", "409"])},
            "/api/report": {"get": op("Report bundle", "200", &["400"])},
        }
    })
}
