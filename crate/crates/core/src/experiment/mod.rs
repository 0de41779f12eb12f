//! The experiment container: one dataset, its models, and every analysis
//! run against them, persisted as a single JSON document.

pub mod ops;
mod pipeline;
mod report;
mod request;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset};
use crate::error::{Error, ErrorClass, Result};
use crate::models::{self, ModelSpec, ScoreTable, TrainedModel};

pub use pipeline::{
    run_pipeline, run_pipeline_config, CompareStep, DataStep, DiagnoseStep, ExplainStep, InterpretStep,
    ModelStep, PipelineConfig, PrepareStep,
};
pub use report::{emit_report, write_report, DatasetInfo, ModelInfo, ReportBundle, ReportEntry, REPORT_FORMAT};
pub use request::{Analysis, AnalysisRequest, ExplainMethod, ExplainRequest, Instance, Section};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;
pub const EXPERIMENT_FORMAT: &str = "workbench-experiment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataEntry {
    /// Where the data came from (a path or a free-form label).
    pub source: String,
    pub content_hash: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelOrigin {
    Trained { spec: ModelSpec, seed: u64 },
    Registered { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub origin: ModelOrigin,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResultKey {
    /// Model id, or ids joined by `+` for comparisons.
    pub model: String,
    pub operation: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok { result: Analysis },
    Error { class: ErrorClass, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub key: ResultKey,
    /// The request with every seed filled in.
    pub request: AnalysisRequest,
    pub seed: u64,
    pub outcome: Outcome,
}

impl ResultEntry {
    pub fn result(&self) -> Option<&Analysis> {
        match &self.outcome {
            Outcome::Ok { result } => Some(result),
            Outcome::Error { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Ok { .. } => None,
            Outcome::Error { message, .. } => Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub schema_version: u32,
    pub seed: u64,
    pub created_at: String,
    pub updated_at: String,
    pub data: Option<DataEntry>,
    pub models: Vec<ModelEntry>,
    pub results: Vec<ResultEntry>,
}

#[derive(Serialize, Deserialize)]
struct ExperimentFile {
    format: String,
    schema_version: u32,
    content_hash: String,
    experiment: serde_json::Value,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn hash_value(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("values serialize")))
}

impl Experiment {
    pub fn new(seed: u64) -> Experiment {
        let t = now();
        Experiment {
            schema_version: EXPERIMENT_SCHEMA_VERSION,
            seed,
            created_at: t.clone(),
            updated_at: t,
            data: None,
            models: Vec::new(),
            results: Vec::new(),
        }
    }

    fn touch(&mut self) {
        self.updated_at = now();
    }

    pub fn dataset(&self) -> Result<&Dataset> {
        self.data
            .as_ref()
            .map(|d| &d.dataset)
            .ok_or_else(|| Error::data("no dataset loaded in the experiment"))
    }

    /// Attach a dataset. Refused once models exist, since they are bound to
    /// the current data.
    pub fn set_data(&mut self, dataset: Dataset, source: impl Into<String>) -> Result<()> {
        if !self.models.is_empty() {
            return Err(Error::Conflict("cannot replace the dataset after models were added".into()));
        }
        dataset.validate()?;
        self.data = Some(DataEntry { source: source.into(), content_hash: dataset.content_hash(), dataset });
        self.touch();
        Ok(())
    }

    pub fn load_data(&mut self, path: &Path, target: &str, task: data::TaskKind) -> Result<()> {
        let ds = data::load_csv(path, target, task)?;
        self.set_data(ds, path.display().to_string())
    }

    /// Split and impute the current dataset.
    pub fn prepare(&mut self, test_ratio: f64) -> Result<()> {
        if !self.models.is_empty() {
            return Err(Error::Conflict("cannot re-split the dataset after models were added".into()));
        }
        let entry = self.data.as_ref().ok_or_else(|| Error::data("no dataset loaded in the experiment"))?;
        let ds = data::prepare(&entry.dataset, test_ratio, self.seed)?;
        let source = entry.source.clone();
        self.set_data(ds, source)
    }

    pub fn model(&self, id: &str) -> Result<&TrainedModel> {
        self.models
            .iter()
            .find(|m| m.id == id)
            .map(|m| &m.model)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn model_entry(&self, id: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.id == id)
    }

    /// First free id of the form `base`, `base-2`, `base-3`, ...
    pub fn next_model_id(&self, base: &str) -> String {
        let taken = |id: &str| self.models.iter().any(|m| m.id == id);
        if !taken(base) {
            return base.to_string();
        }
        (2..).map(|k| format!("{base}-{k}")).find(|id| !taken(id)).expect("unbounded")
    }

    pub fn add_model(&mut self, id: impl Into<String>, origin: ModelOrigin, model: TrainedModel) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("id", "model ids must be non-empty"));
        }
        if id.contains('+') {
            return Err(Error::invalid("id", "model ids cannot contain `+`"));
        }
        if self.model_entry(&id).is_some() {
            return Err(Error::Conflict(format!("a model with id `{id}` already exists")));
        }
        let ds = self.dataset()?;
        if model.task() != ds.task {
            return Err(Error::invalid("model", format!("model task {} does not match dataset task {}", model.task(), ds.task)));
        }
        self.models.push(ModelEntry { id, origin, model });
        self.touch();
        Ok(())
    }

    /// Train a model on the current train split. Returns its id.
    pub fn train_model(&mut self, id: Option<String>, spec: ModelSpec) -> Result<String> {
        let id = id.unwrap_or_else(|| self.next_model_id(spec.family().as_str()));
        if self.model_entry(&id).is_some() {
            return Err(Error::Conflict(format!("a model with id `{id}` already exists")));
        }
        let seed = self.seed;
        let model = models::train(self.dataset()?, &spec, seed)?;
        self.add_model(id.clone(), ModelOrigin::Trained { spec, seed }, model)?;
        Ok(id)
    }

    /// Register a table of scores aligned to dataset rows as a pseudo model.
    pub fn register_scores(&mut self, id: Option<String>, table: ScoreTable, source: impl Into<String>) -> Result<String> {
        let id = id.unwrap_or_else(|| self.next_model_id("registered"));
        let model = models::register_scores(self.dataset()?, table)?;
        self.add_model(id.clone(), ModelOrigin::Registered { source: source.into() }, model)?;
        Ok(id)
    }

    pub fn find_result(&self, key: &ResultKey) -> Option<&ResultEntry> {
        self.results.iter().find(|r| &r.key == key)
    }

    /// Seed-complete request and key for `request`, without running it.
    pub fn resolve(&self, request: AnalysisRequest) -> (AnalysisRequest, ResultKey) {
        let request = request.with_seed(self.seed);
        let key = ResultKey { model: request.model_key(), operation: request.operation(), config_hash: request.config_hash() };
        (request, key)
    }

    /// Run `request` unless a result with the same key is stored, in which
    /// case the stored entry is returned. Failures are stored as error
    /// entries; only a missing dataset is reported as `Err`.
    pub fn run(&mut self, request: AnalysisRequest) -> Result<&ResultEntry> {
        let (request, key) = self.resolve(request);
        if let Some(i) = self.results.iter().position(|r| r.key == key) {
            return Ok(&self.results[i]);
        }
        let entry = self.compute(request, key)?;
        Ok(self.insert(entry))
    }

    /// Fail fast on a missing dataset, unknown model ids or a capability
    /// the model lacks.
    pub fn check(&self, request: &AnalysisRequest) -> Result<()> {
        self.dataset()?;
        request.check(|id| self.model(id))
    }

    /// Compute a resolved request without storing it.
    pub fn compute(&self, request: AnalysisRequest, key: ResultKey) -> Result<ResultEntry> {
        let ds = self.dataset()?;
        let outcome = match request.compute(ds, |id| self.model(id), self.seed) {
            Ok(result) => Outcome::Ok { result },
            Err(e) => Outcome::Error { class: e.class(), message: e.to_string() },
        };
        Ok(ResultEntry { key, request, seed: self.seed, outcome })
    }

    /// Append a computed entry. An existing entry with the same key wins.
    pub fn insert(&mut self, entry: ResultEntry) -> &ResultEntry {
        if let Some(i) = self.results.iter().position(|r| r.key == entry.key) {
            return &self.results[i];
        }
        self.results.push(entry);
        self.touch();
        self.results.last().expect("just pushed")
    }

    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Serialization(e.to_string()))?;
        let file = ExperimentFile {
            format: EXPERIMENT_FORMAT.into(),
            schema_version: self.schema_version,
            content_hash: hash_value(&value),
            experiment: value,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Experiment> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupted(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(EXPERIMENT_FORMAT) {
            return Err(Error::Corrupted("not an experiment file".into()));
        }
        let version = probe.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != EXPERIMENT_SCHEMA_VERSION {
            return Err(Error::Migration { found: version, supported: EXPERIMENT_SCHEMA_VERSION });
        }
        let file: ExperimentFile = serde_json::from_value(probe).map_err(|e| Error::Corrupted(e.to_string()))?;
        if hash_value(&file.experiment) != file.content_hash {
            return Err(Error::Corrupted("content hash mismatch".into()));
        }
        let exp: Experiment = serde_json::from_value(file.experiment).map_err(|e| Error::Corrupted(e.to_string()))?;
        if let Some(d) = &exp.data {
            if d.dataset.content_hash() != d.content_hash {
                return Err(Error::Corrupted("dataset content hash mismatch".into()));
            }
        }
        Ok(exp)
    }

    /// Write atomically: a sibling temp file renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| Error::Io { path: p, source }
        };
        std::fs::write(&tmp, text).map_err(io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io(path))
    }

    pub fn load(path: &Path) -> Result<Experiment> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Experiment::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, TaskKind};

    fn ds() -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        Dataset::new("t", vec![Column::numeric("x", x), Column::numeric("y", y)], "y", TaskKind::Regression).unwrap()
    }

    #[test]
    fn ids_are_unique() {
        let mut e = Experiment::new(1);
        e.set_data(ds(), "mem").unwrap();
        e.prepare(0.25).unwrap();
        let a = e.train_model(None, ModelSpec::default_for(models::Family::Glm)).unwrap();
        let b = e.train_model(None, ModelSpec::default_for(models::Family::Glm)).unwrap();
        assert_eq!((a.as_str(), b.as_str()), ("glm", "glm-2"));
        let err = e.train_model(Some("glm".into()), ModelSpec::default_for(models::Family::Glm)).unwrap_err();
        assert_eq!(err.class(), ErrorClass::Conflict);
        assert_eq!(e.prepare(0.3).unwrap_err().class(), ErrorClass::Conflict);
    }

    #[test]
    fn rerun_returns_the_stored_entry() {
        let mut e = Experiment::new(1);
        e.set_data(ds(), "mem").unwrap();
        e.prepare(0.25).unwrap();
        e.train_model(None, ModelSpec::default_for(models::Family::Glm)).unwrap();
        let req = AnalysisRequest::Interpret { model: "glm".into(), instance: None };
        let first = e.run(req.clone()).unwrap().clone();
        let second = e.run(req).unwrap().clone();
        assert_eq!(first, second);
        assert_eq!(e.results.len(), 1);
    }
}
