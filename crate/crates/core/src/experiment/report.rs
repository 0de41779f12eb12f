//! Report bundles: a deterministic JSON record of an experiment's data,
//! models and results, with the full request and seed of each result.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::request::Section;
use super::{DataEntry, Experiment, ModelEntry, ModelOrigin, ResultEntry};
use crate::data::{data_quality, summarize, DataQualityReport, EdaSummary, TaskKind};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "workbench-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub name: String,
    pub source: String,
    pub content_hash: String,
    pub target: String,
    pub task: TaskKind,
    pub rows: usize,
    pub features: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub id: String,
    pub kind: String,
    pub glass: bool,
    pub evaluable: bool,
    pub origin: ModelOrigin,
}

impl DatasetInfo {
    pub fn of(entry: &DataEntry) -> DatasetInfo {
        let ds = &entry.dataset;
        DatasetInfo {
            name: ds.name.clone(),
            source: entry.source.clone(),
            content_hash: entry.content_hash.clone(),
            target: ds.target.clone(),
            task: ds.task,
            rows: ds.n_rows(),
            features: ds.feature_names(),
            train_rows: ds.train_rows().len(),
            test_rows: ds.test_rows().len(),
        }
    }
}

impl ModelInfo {
    pub fn of(entry: &ModelEntry) -> ModelInfo {
        ModelInfo {
            id: entry.id.clone(),
            kind: entry.model.kind_name().into(),
            glass: entry.model.is_glass(),
            evaluable: entry.model.is_evaluable(),
            origin: entry.origin.clone(),
        }
    }
}

pub type ReportEntry = ResultEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBundle {
    pub format: String,
    pub schema_version: u32,
    pub seed: u64,
    pub dataset: DatasetInfo,
    pub summary: EdaSummary,
    pub quality: DataQualityReport,
    pub models: Vec<ModelInfo>,
    pub interpretations: Vec<ReportEntry>,
    pub explanations: Vec<ReportEntry>,
    pub diagnostics: Vec<ReportEntry>,
    pub comparisons: Vec<ReportEntry>,
}

impl ReportBundle {
    pub fn entries(&self) -> impl Iterator<Item = &ReportEntry> {
        self.interpretations.iter().chain(&self.explanations).chain(&self.diagnostics).chain(&self.comparisons)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse a bundle and check it is internally consistent: known format
    /// and version, every entry in the right section, and every key
    /// recomputable from its stored request.
    pub fn validate(text: &str) -> Result<ReportBundle> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let bundle: ReportBundle = serde_path_to_error::deserialize(de).map_err(|e| Error::InvalidConfig {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        if bundle.format != REPORT_FORMAT {
            return Err(Error::invalid("format", format!("expected `{REPORT_FORMAT}`")));
        }
        if bundle.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Migration { found: bundle.schema_version, supported: REPORT_SCHEMA_VERSION });
        }
        let sections = [
            (Section::Interpretation, &bundle.interpretations, "interpretations"),
            (Section::Explanation, &bundle.explanations, "explanations"),
            (Section::Diagnostic, &bundle.diagnostics, "diagnostics"),
            (Section::Comparison, &bundle.comparisons, "comparisons"),
        ];
        for (section, entries, name) in sections {
            for (i, e) in entries.iter().enumerate() {
                let bad = |reason: &str| Error::InvalidConfig { path: format!("{name}[{i}]"), reason: reason.into() };
                if e.request.section() != section {
                    return Err(bad("entry is filed under the wrong section"));
                }
                if e.key.operation != e.request.operation()
                    || e.key.model != e.request.model_key()
                    || e.key.config_hash != e.request.config_hash()
                {
                    return Err(bad("result key does not match its request"));
                }
            }
        }
        Ok(bundle)
    }
}

/// Bundle an experiment with at least one result. Timestamps are left out
/// so equal experiments give byte-identical bundles.
pub fn emit_report(exp: &Experiment) -> Result<ReportBundle> {
    if exp.results.is_empty() {
        return Err(Error::data("the experiment has no results to report"));
    }
    let entry = exp.data.as_ref().ok_or_else(|| Error::data("no dataset loaded in the experiment"))?;
    let ds = &entry.dataset;
    let dataset = DatasetInfo::of(entry);
    let models = exp
        .models
        .iter()
        .map(ModelInfo::of)
        .collect();
    let section = |s: Section| exp.results.iter().filter(|r| r.request.section() == s).cloned().collect::<Vec<_>>();
    Ok(ReportBundle {
        format: REPORT_FORMAT.into(),
        schema_version: REPORT_SCHEMA_VERSION,
        seed: exp.seed,
        dataset,
        summary: summarize(ds),
        quality: data_quality(ds),
        models,
        interpretations: section(Section::Interpretation),
        explanations: section(Section::Explanation),
        diagnostics: section(Section::Diagnostic),
        comparisons: section(Section::Comparison),
    })
}

pub fn write_report(exp: &Experiment, path: &Path) -> Result<ReportBundle> {
    let bundle = emit_report(exp)?;
    std::fs::write(path, bundle.to_json()?).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(bundle)
}
