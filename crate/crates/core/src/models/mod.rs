//! Model zoo: glass-box trainers, registered models and the shared
//! prediction contract.

pub mod binning;
pub mod boost;
pub mod design;
pub mod effects;
pub mod gam;
pub mod glm;
pub mod registered;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use binning::{optimal_binning, quantile_binning, BinEdges};
pub use boost::{BoostModel, BoostNode, BoostTrace, BoostTree, Xgb1Params, Xgb2Params};
pub use design::{Design, DesignColumn};
pub use effects::{EffectRepresentation, FeatureBins, PairEffect, PurifyReport};
pub use gam::{GamModel, GamParams, GamTerm, SplineBasis};
pub use glm::{alpha_max, GlmFitTrace, GlmModel, GlmParams, Link};
pub use registered::{CallableModel, ScoreTable};
pub use tree::{PathStep, SplitRule, TreeModel, TreeNode, TreeParams};

use crate::data::{Dataset, Frame, Schema, TaskKind};
use crate::error::{Error, Result};
use crate::stats;

/// Complete, finite training rows of a dataset.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub x: Frame,
    pub y: Vec<f64>,
    pub schema: Schema,
    pub task: TaskKind,
    /// Dataset row id of each view row.
    pub rows: Vec<usize>,
}

impl TrainView {
    pub fn from_dataset(ds: &Dataset) -> Result<TrainView> {
        let rows = ds.train_rows();
        if rows.is_empty() {
            return Err(Error::data("the train partition is empty"));
        }
        for col in ds.feature_columns() {
            if rows.iter().any(|&r| col.missing[r]) {
                return Err(Error::data(format!(
                    "feature `{}` has missing train values; run prepare first",
                    col.name
                )));
            }
        }
        let x = ds.frame(&rows);
        if x.rows().flatten().any(|v| !v.is_finite()) {
            return Err(Error::data("features contain non-finite values"));
        }
        let y = ds.targets_of(&rows);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("target contains non-finite values"));
        }
        match ds.task {
            TaskKind::Regression if stats::population_variance(&y) == 0.0 => {
                return Err(Error::data("target has zero variance on the train split"));
            }
            TaskKind::Binary if y.iter().all(|v| *v == y[0]) => {
                return Err(Error::data("binary target has a single class on the train split"));
            }
            _ => {}
        }
        Ok(TrainView {
            x,
            y,
            schema: ds.schema(),
            task: ds.task,
            rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Glm,
    Gam,
    Tree,
    Xgb1,
    Xgb2,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Glm, Family::Gam, Family::Tree, Family::Xgb1, Family::Xgb2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Glm => "glm",
            Family::Gam => "gam",
            Family::Tree => "tree",
            Family::Xgb1 => "xgb1",
            Family::Xgb2 => "xgb2",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        let lower = s.trim().to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == lower)
            .ok_or_else(|| {
                let names: Vec<&str> = Family::ALL.iter().map(Family::as_str).collect();
                Error::invalid(
                    "model",
                    format!("unsupported family `{s}`; supported: {}", names.join(", ")),
                )
            })
    }
}

/// Family plus hyperparameters, e.g. `{"family": "glm", "alpha": 0.1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Glm(GlmParams),
    Gam(GamParams),
    Tree(TreeParams),
    Xgb1(Xgb1Params),
    Xgb2(Xgb2Params),
}

impl ModelSpec {
    pub fn default_for(family: Family) -> ModelSpec {
        match family {
            Family::Glm => ModelSpec::Glm(GlmParams::default()),
            Family::Gam => ModelSpec::Gam(GamParams::default()),
            Family::Tree => ModelSpec::Tree(TreeParams::default()),
            Family::Xgb1 => ModelSpec::Xgb1(Xgb1Params::default()),
            Family::Xgb2 => ModelSpec::Xgb2(Xgb2Params::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Glm(_) => Family::Glm,
            ModelSpec::Gam(_) => Family::Gam,
            ModelSpec::Tree(_) => Family::Tree,
            ModelSpec::Xgb1(_) => Family::Xgb1,
            ModelSpec::Xgb2(_) => Family::Xgb2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Glm(GlmModel),
    Gam(GamModel),
    Tree(TreeModel),
    Xgb1(BoostModel),
    Xgb2(BoostModel),
    ScoreTable(ScoreTable),
    Callable(CallableModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema: Schema,
    pub body: ModelBody,
}

impl TrainedModel {
    pub fn task(&self) -> TaskKind {
        self.schema.task
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.body {
            ModelBody::Glm(_) => "glm",
            ModelBody::Gam(_) => "gam",
            ModelBody::Tree(_) => "tree",
            ModelBody::Xgb1(_) => "xgb1",
            ModelBody::Xgb2(_) => "xgb2",
            ModelBody::ScoreTable(_) => "score_table",
            ModelBody::Callable(_) => "callable",
        }
    }

    /// Glass models carry their own interpretation.
    pub fn is_glass(&self) -> bool {
        !matches!(self.body, ModelBody::ScoreTable(_) | ModelBody::Callable(_))
    }

    /// Whether the model can score rows it has not seen (everything but
    /// score tables).
    pub fn is_evaluable(&self) -> bool {
        !matches!(self.body, ModelBody::ScoreTable(_))
    }

    pub fn require_evaluable(&self, op: &str) -> Result<()> {
        if self.is_evaluable() {
            Ok(())
        } else {
            Err(Error::Capability(format!(
                "{op} needs to evaluate the model on new rows, which a score-table model cannot do"
            )))
        }
    }

    /// Score on the pre-link scale: the margin for glass models with a
    /// logistic link, the score itself otherwise.
    pub fn margin_row(&self, row: &[f64]) -> Result<f64> {
        Ok(match &self.body {
            ModelBody::Glm(m) => m.margin(row),
            ModelBody::Gam(m) => m.margin(row),
            ModelBody::Tree(m) => m.predict_row(row),
            ModelBody::Xgb1(m) | ModelBody::Xgb2(m) => m.margin(row),
            ModelBody::Callable(c) => (c.func)(row),
            ModelBody::ScoreTable(_) => {
                return Err(Error::Capability(
                    "a score-table model cannot evaluate new rows".into(),
                ))
            }
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let v = match &self.body {
            ModelBody::Glm(m) => m.predict_row(row),
            ModelBody::Gam(m) => m.predict_row(row),
            ModelBody::Tree(m) => m.predict_row(row),
            ModelBody::Xgb1(m) | ModelBody::Xgb2(m) => m.predict_row(row),
            ModelBody::Callable(c) => {
                let v = (c.func)(row);
                if !v.is_finite() {
                    return Err(Error::Numerical(format!(
                        "callable model `{}` returned a non-finite score",
                        c.name
                    )));
                }
                v
            }
            ModelBody::ScoreTable(_) => return self.margin_row(row),
        };
        Ok(v)
    }

    /// Scores for every row of a frame.
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.schema.check_frame(frame)?;
        frame.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Scores for dataset rows; score tables answer by row id.
    pub fn score_rows(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        match &self.body {
            ModelBody::ScoreTable(t) => {
                if t.scores.len() != ds.n_rows() {
                    return Err(Error::Schema(
                        "score table does not align with the dataset".into(),
                    ));
                }
                rows.iter().map(|&r| t.score(r)).collect()
            }
            _ => {
                if ds.schema() != self.schema {
                    return Err(Error::Schema(
                        "dataset features do not match the model schema".into(),
                    ));
                }
                self.predict(&ds.frame(rows))
            }
        }
    }
}

/// Train a glass model on the train split. `seed` drives any internal
/// carve-outs whose seed the spec leaves unset.
pub fn train(ds: &Dataset, spec: &ModelSpec, seed: u64) -> Result<TrainedModel> {
    let view = TrainView::from_dataset(ds)?;
    let body = match spec {
        ModelSpec::Glm(p) => ModelBody::Glm(GlmModel::fit(&view, p)?),
        ModelSpec::Gam(p) => {
            let p = GamParams { seed: Some(p.seed.unwrap_or(seed)), ..*p };
            ModelBody::Gam(GamModel::fit(&view, &p)?)
        }
        ModelSpec::Tree(p) => ModelBody::Tree(TreeModel::fit(&view, p)?),
        ModelSpec::Xgb1(p) => {
            let p = Xgb1Params { seed: Some(p.seed.unwrap_or(seed)), ..*p };
            ModelBody::Xgb1(BoostModel::fit_xgb1(&view, &p)?.0)
        }
        ModelSpec::Xgb2(p) => {
            let p = Xgb2Params { seed: Some(p.seed.unwrap_or(seed)), ..*p };
            ModelBody::Xgb2(BoostModel::fit_xgb2(&view, &p)?.0)
        }
    };
    Ok(TrainedModel { schema: view.schema, body })
}

/// Wrap a score table as a pseudo model over `ds`.
pub fn register_scores(ds: &Dataset, table: ScoreTable) -> Result<TrainedModel> {
    if table.scores.len() != ds.n_rows() {
        return Err(Error::data(format!(
            "score table has {} rows but the dataset has {}",
            table.scores.len(),
            ds.n_rows()
        )));
    }
    Ok(TrainedModel { schema: ds.schema(), body: ModelBody::ScoreTable(table) })
}

pub fn register_callable(ds: &Dataset, model: CallableModel) -> TrainedModel {
    TrainedModel { schema: ds.schema(), body: ModelBody::Callable(model) }
}

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    schema_version: u32,
    model: TrainedModel,
}

const MODEL_FORMAT: &str = "workbench-model";

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        schema_version: MODEL_FILE_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupted(e.to_string()))?;
    let version = probe.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if probe.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::Corrupted("not a model file".into()));
    }
    if version != MODEL_FILE_VERSION {
        return Err(Error::Migration { found: version, supported: MODEL_FILE_VERSION });
    }
    let file: ModelFile = serde_json::from_value(probe).map_err(|e| Error::Corrupted(e.to_string()))?;
    Ok(file.model)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn ds() -> Dataset {
        let x1: Vec<f64> = (0..60).map(|i| i as f64 / 10.0).collect();
        let c: Vec<&str> = (0..60).map(|i| ["a", "b", "c"][i % 3]).collect();
        let y: Vec<f64> = (0..60).map(|i| x1[i] * 2.0 + (i % 3) as f64).collect();
        Dataset::new(
            "m",
            vec![Column::numeric("x1", x1), Column::categorical("c", &c), Column::numeric("y", y)],
            "y",
            TaskKind::Regression,
        )
        .unwrap()
    }

    #[test]
    fn family_parsing_lists_supported() {
        assert_eq!("XGB2".parse::<Family>().unwrap(), Family::Xgb2);
        let err = "ebm".parse::<Family>().unwrap_err().to_string();
        assert!(err.contains("glm, gam, tree, xgb1, xgb2"), "{err}");
    }

    #[test]
    fn spec_json_is_tagged_by_family() {
        let spec: ModelSpec = serde_json::from_str(r#"{"family":"glm","alpha":0.5}"#).unwrap();
        assert_eq!(spec, ModelSpec::Glm(GlmParams { alpha: 0.5, ..Default::default() }));
        assert!(serde_json::from_str::<ModelSpec>(r#"{"family":"glm","alpah":0.5}"#).is_err());
    }

    #[test]
    fn every_family_round_trips_through_json() {
        let d = ds();
        for f in Family::ALL {
            let m = train(&d, &ModelSpec::default_for(f), 3).unwrap();
            let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
            let frame = d.frame(&d.all_rows());
            assert_eq!(m.predict(&frame).unwrap(), back.predict(&frame).unwrap(), "{f}");
        }
    }

    #[test]
    fn rejects_degenerate_targets() {
        let d = Dataset::new(
            "z",
            vec![Column::numeric("x", vec![1.0, 2.0, 3.0]), Column::numeric("y", vec![4.0; 3])],
            "y",
            TaskKind::Regression,
        )
        .unwrap();
        assert!(train(&d, &ModelSpec::default_for(Family::Glm), 0).is_err());
    }

    #[test]
    fn score_table_answers_by_row_id() {
        let d = ds();
        let scores: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let m = register_scores(&d, ScoreTable::new(&d, scores).unwrap()).unwrap();
        assert_eq!(m.score_rows(&d, &[5, 7]).unwrap(), vec![5.0, 7.0]);
        assert!(!m.is_evaluable() && !m.is_glass());
        assert!(m.predict(&d.frame(&[0])).is_err());
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let d = ds();
        let m = train(&d, &ModelSpec::default_for(Family::Tree), 0).unwrap();
        let text = model_to_json(&m).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 7");
        let err = model_from_json(&text).unwrap_err().to_string();
        assert!(err.contains('7') && err.contains('1'));
    }
}
