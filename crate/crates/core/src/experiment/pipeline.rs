//! Declarative end-to-end runs from a JSON pipeline file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::request::{AnalysisRequest, ExplainRequest, Instance};
use super::Experiment;
use crate::data::{self, TaskKind};
use crate::diagnose::DiagnosticConfig;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ScoreTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataStep {
    /// CSV path, relative to the pipeline file.
    pub path: PathBuf,
    pub target: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareStep {
    pub test_ratio: f64,
}

impl Default for PrepareStep {
    fn default() -> Self {
        PrepareStep { test_ratio: 0.2 }
    }
}

/// A model to train (`spec`) or a score file to register (`scores`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpretStep {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Instance>,
}

/// `{"model": ..., "method": ..., <method parameters>}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainStep {
    pub model: String,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseStep {
    /// Every model in the experiment when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub test: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareTest {
    pub test: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareStep {
    pub models: Vec<String>,
    #[serde(default)]
    pub tests: Vec<CompareTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataStep,
    #[serde(default)]
    pub prepare: PrepareStep,
    #[serde(default)]
    pub models: Vec<ModelStep>,
    #[serde(default)]
    pub interpret: Vec<InterpretStep>,
    #[serde(default)]
    pub explain: Vec<ExplainStep>,
    #[serde(default)]
    pub diagnose: Vec<DiagnoseStep>,
    #[serde(default)]
    pub compare: Vec<CompareStep>,
}

enum Planned {
    One(AnalysisRequest),
    /// A diagnostic to run on every model.
    AllModels(DiagnosticConfig),
}

fn at(prefix: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidConfig { path, reason } => {
            let path = if path.is_empty() || path == "." { prefix.clone() } else { format!("{prefix}.{path}") };
            Error::InvalidConfig { path, reason }
        }
        Error::InvalidParameter { name, reason } => Error::InvalidConfig { path: format!("{prefix}.{name}"), reason },
        other => Error::InvalidConfig { path: prefix.clone(), reason: other.to_string() },
    }
}

fn parse_test(name: &str, config: &serde_json::Value, prefix: &str) -> Result<DiagnosticConfig> {
    super::ops::diagnostic(name, config.clone()).map_err(at(prefix.to_string()))
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::InvalidConfig {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        config.requests()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        PipelineConfig::from_json(&text)
    }

    /// Typed analysis requests in execution order.
    fn requests(&self) -> Result<Vec<Planned>> {
        for (i, m) in self.models.iter().enumerate() {
            if m.spec.is_some() == m.scores.is_some() {
                return Err(Error::InvalidConfig { path: format!("models[{i}]"), reason: "give exactly one of `spec` or `scores`".into() });
            }
            if m.scores.is_some() && m.id.is_none() {
                return Err(Error::InvalidConfig { path: format!("models[{i}].id"), reason: "registered models need an id".into() });
            }
        }
        let mut out = Vec::new();
        for s in &self.interpret {
            out.push(Planned::One(AnalysisRequest::Interpret { model: s.model.clone(), instance: s.instance.clone() }));
        }
        for (i, s) in self.explain.iter().enumerate() {
            let value = serde_json::Value::Object(s.params.clone());
            let request: ExplainRequest = serde_path_to_error::deserialize(value).map_err(|e| Error::InvalidConfig {
                path: match e.path().to_string() {
                    p if p == "." => format!("explain[{i}]"),
                    p => format!("explain[{i}].{p}"),
                },
                reason: e.inner().to_string(),
            })?;
            out.push(Planned::One(AnalysisRequest::Explain { model: s.model.clone(), request }));
        }
        for (i, s) in self.diagnose.iter().enumerate() {
            let diagnostic = parse_test(&s.test, &s.config, &format!("diagnose[{i}]"))?;
            match &s.model {
                Some(model) => out.push(Planned::One(AnalysisRequest::Diagnose { model: model.clone(), diagnostic })),
                None => out.push(Planned::AllModels(diagnostic)),
            }
        }
        for (i, s) in self.compare.iter().enumerate() {
            let tests = s
                .tests
                .iter()
                .enumerate()
                .map(|(k, t)| parse_test(&t.test, &t.config, &format!("compare[{i}].tests[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            out.push(Planned::One(AnalysisRequest::Compare { models: s.models.clone(), tests }));
        }
        Ok(out)
    }
}

/// Run a pipeline file. Relative paths resolve against the file's directory.
pub fn run_pipeline(path: &Path) -> Result<Experiment> {
    let config = PipelineConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_pipeline_config(&config, base)
}

/// Load, prepare, build models, then run interpret, explain, diagnose and
/// compare steps in file order. A failing analysis is stored as an error
/// entry and the run continues; data and model steps abort the run.
pub fn run_pipeline_config(config: &PipelineConfig, base_dir: &Path) -> Result<Experiment> {
    let requests = config.requests()?;
    let mut exp = Experiment::new(config.seed);
    let data_path = base_dir.join(&config.data.path);
    let mut ds = data::load_csv(&data_path, &config.data.target, config.data.task)?;
    if let Some(name) = &config.data.name {
        ds.name = name.clone();
    }
    exp.set_data(ds, config.data.path.display().to_string())?;
    exp.prepare(config.prepare.test_ratio)?;

    for (i, step) in config.models.iter().enumerate() {
        let id = step.id.clone();
        match (&step.spec, &step.scores) {
            (Some(spec), None) => {
                exp.train_model(id, spec.clone()).map_err(at(format!("models[{i}]")))?;
            }
            (None, Some(scores)) => {
                let table = ScoreTable::load(exp.dataset()?, &base_dir.join(scores))?;
                exp.register_scores(id, table, scores.display().to_string())?;
            }
            _ => unreachable!("validated"),
        }
    }

    let model_ids: Vec<String> = exp.models.iter().map(|m| m.id.clone()).collect();
    for planned in requests {
        match planned {
            Planned::One(r) => {
                exp.run(r)?;
            }
            Planned::AllModels(diagnostic) => {
                for id in &model_ids {
                    exp.run(AnalysisRequest::Diagnose { model: id.clone(), diagnostic: diagnostic.clone() })?;
                }
            }
        }
    }
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_the_key() {
        let base = r#"{"data": {"path": "d.csv", "target": "y", "task": "regression"}"#;
        let cases = [
            (r#", "diagnose": [{"test": "weakspot", "config": {"slice": {"features": ["x"], "bins": "ten"}}}]}"#, "diagnose[0].config.slice.bins"),
            (r#", "diagnose": [{"test": "nope"}]}"#, "diagnose[0].test"),
            (r#", "explain": [{"model": "m", "method": "pfi", "repeats": -1}]}"#, "explain[0].repeats"),
            (r#", "models": [{"spec": {"family": "glm"}, "scores": "s.csv"}]}"#, "models[0]"),
            (r#", "prepare": {"test_ratio": "x"}}"#, "prepare.test_ratio"),
        ];
        for (tail, want) in cases {
            match PipelineConfig::from_json(&format!("{base}{tail}")).unwrap_err() {
                Error::InvalidConfig { path, .. } => assert_eq!(path, want),
                other => panic!("{other:?}"),
            }
        }
    }
}
