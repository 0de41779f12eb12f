use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::frame::Frame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Binary,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Regression => "regression",
            TaskKind::Binary => "binary",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(TaskKind::Regression),
            "binary" | "classification" => Ok(TaskKind::Binary),
            other => Err(Error::invalid("task", format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Column storage. Missing cells hold a placeholder (0.0 or code 0) and are
/// flagged in the column's mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnData {
    Numeric { values: Vec<f64> },
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        Column {
            name: name.into(),
            data: ColumnData::Numeric { values },
            missing,
        }
    }

    /// Build a categorical column from labels; levels in first-appearance order.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, u32> = BTreeMap::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    levels.push(l.to_string());
                    (levels.len() - 1) as u32
                })
            })
            .collect::<Vec<_>>();
        Column {
            name: name.into(),
            missing: vec![false; codes.len()],
            data: ColumnData::Categorical { levels, codes },
        }
    }

    pub fn with_missing(mut self, missing: Vec<bool>) -> Self {
        assert_eq!(missing.len(), self.len());
        self.missing = missing;
        self
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric { .. } => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    /// Numeric view: raw values for numeric columns, level codes for categorical.
    pub fn value(&self, row: usize) -> f64 {
        match &self.data {
            ColumnData::Numeric { values } => values[row],
            ColumnData::Categorical { codes, .. } => codes[row] as f64,
        }
    }

    pub fn values_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    pub fn numeric_values(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric { values } => Some(values),
            ColumnData::Categorical { .. } => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { levels, .. } => Some(levels),
            ColumnData::Numeric { .. } => None,
        }
    }

    /// Non-missing values of the given rows (numeric view).
    pub fn present_values(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .filter(|&&r| !self.missing[r])
            .map(|&r| self.value(r))
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    /// Render one cell the way CSV output writes it.
    pub fn cell_text(&self, row: usize) -> String {
        if self.missing[row] {
            return String::new();
        }
        match &self.data {
            ColumnData::Numeric { values } => format!("{}", values[row]),
            ColumnData::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
        }
    }
}

/// Per-feature schema entry shared by the data and model layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureInfo>,
    pub task: TaskKind,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Encode a named instance (`{"x1": 0.3, "color": "red"}`) into a model row.
    pub fn encode_instance(&self, values: &BTreeMap<String, serde_json::Value>) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let v = values
                .get(&f.name)
                .ok_or_else(|| Error::Schema(format!("instance lacks feature `{}`", f.name)))?;
            let x = match f.kind {
                ColumnKind::Numeric => v
                    .as_f64()
                    .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| Error::Schema(format!("feature `{}` expects a number", f.name)))?,
                ColumnKind::Categorical => {
                    let label = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    f.levels.iter().position(|l| *l == label).ok_or_else(|| {
                        Error::Schema(format!("feature `{}` has no level `{label}`", f.name))
                    })? as f64
                }
            };
            row.push(x);
        }
        Ok(row)
    }

    pub fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.n_cols() != self.features.len() {
            return Err(Error::Schema(format!(
                "expected {} feature columns, got {}",
                self.features.len(),
                frame.n_cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<Column>,
    pub target: String,
    pub task: TaskKind,
    pub split: Vec<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    /// Assemble and validate a dataset; every row starts in the train partition.
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        target: impl Into<String>,
        task: TaskKind,
    ) -> Result<Self> {
        let n = columns.first().map(Column::len).unwrap_or(0);
        let ds = Dataset {
            name: name.into(),
            columns,
            target: target.into(),
            task,
            split: vec![Partition::Train; n],
            weights: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if n == 0 {
            return Err(Error::data("dataset has zero data rows"));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if c.len() != n {
                return Err(Error::data(format!(
                    "column `{}` has {} rows, expected {n}",
                    c.name,
                    c.len()
                )));
            }
            let data_len = match &c.data {
                ColumnData::Numeric { values } => values.len(),
                ColumnData::Categorical { levels, codes } => {
                    if levels.is_empty() {
                        return Err(Error::data(format!("categorical column `{}` has no levels", c.name)));
                    }
                    if codes.iter().any(|&k| k as usize >= levels.len()) {
                        return Err(Error::data(format!("column `{}` has an out-of-range level code", c.name)));
                    }
                    codes.len()
                }
            };
            if data_len != n {
                return Err(Error::data(format!("column `{}` values and mask disagree in length", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::data(format!("duplicate column name `{}`", c.name)));
            }
        }
        if self.split.len() != n {
            return Err(Error::data("split assignment does not cover every row"));
        }
        if let Some(w) = &self.weights {
            if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::data("weights must be finite, non-negative and one per row"));
            }
        }
        let target = self.column(&self.target)?;
        if target.missing.iter().any(|m| *m) {
            return Err(Error::data(format!("target `{}` has missing values", self.target)));
        }
        let values = target.numeric_values().ok_or_else(|| {
            Error::data(format!("target `{}` must be numeric", self.target))
        })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("target contains non-finite values"));
        }
        if self.task == TaskKind::Binary && values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::data(format!(
                "binary target `{}` has values outside {{0,1}}",
                self.target
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Column::len).unwrap_or(0)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(move |c| c.name != self.target)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_columns().map(|c| c.name.clone()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn schema(&self) -> Schema {
        Schema {
            features: self
                .feature_columns()
                .map(|c| FeatureInfo {
                    name: c.name.clone(),
                    kind: c.kind(),
                    levels: c.levels().map(<[String]>::to_vec).unwrap_or_default(),
                })
                .collect(),
            task: self.task,
        }
    }

    pub fn target_values(&self) -> &[f64] {
        self.column(&self.target)
            .ok()
            .and_then(Column::numeric_values)
            .expect("validated dataset has a numeric target")
    }

    pub fn rows_in(&self, part: Partition) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.split[i] == part).collect()
    }

    pub fn train_rows(&self) -> Vec<usize> {
        self.rows_in(Partition::Train)
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.rows_in(Partition::Test)
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    pub fn targets_of(&self, rows: &[usize]) -> Vec<f64> {
        let y = self.target_values();
        rows.iter().map(|&r| y[r]).collect()
    }

    /// Feature matrix (numeric view, categorical as level codes) for the given rows.
    pub fn frame(&self, rows: &[usize]) -> Frame {
        let cols: Vec<&Column> = self.feature_columns().collect();
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            data.extend(cols.iter().map(|c| c.value(r)));
        }
        Frame::new(cols.len(), data)
    }

    pub fn has_missing_features(&self) -> bool {
        self.feature_columns().any(|c| c.missing.iter().any(|m| *m))
    }

    pub fn with_split(mut self, split: Vec<Partition>) -> Result<Self> {
        if split.len() != self.n_rows() {
            return Err(Error::data("split assignment does not cover every row"));
        }
        self.split = split;
        Ok(self)
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::new(
            "t",
            vec![
                Column::numeric("x", vec![1.0, 2.0, 3.0]),
                Column::categorical("c", &["a", "b", "a"]),
                Column::numeric("y", vec![0.0, 1.0, 1.0]),
            ],
            "y",
            TaskKind::Binary,
        )
        .unwrap()
    }

    #[test]
    fn frame_encodes_codes() {
        let ds = small();
        let f = ds.frame(&[0, 1, 2]);
        assert_eq!(f.row(1), &[2.0, 1.0]);
        assert_eq!(ds.schema().features[1].levels, vec!["a", "b"]);
    }

    #[test]
    fn rejects_bad_binary_target() {
        let err = Dataset::new(
            "t",
            vec![Column::numeric("x", vec![1.0]), Column::numeric("y", vec![2.0])],
            "y",
            TaskKind::Binary,
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn rejects_duplicate_names_and_ragged_columns() {
        let dup = Dataset::new(
            "t",
            vec![Column::numeric("x", vec![1.0]), Column::numeric("x", vec![2.0])],
            "x",
            TaskKind::Regression,
        );
        assert!(dup.is_err());
        let ragged = Dataset::new(
            "t",
            vec![Column::numeric("x", vec![1.0]), Column::numeric("y", vec![2.0, 3.0])],
            "y",
            TaskKind::Regression,
        );
        assert!(ragged.is_err());
    }

    #[test]
    fn encode_instance_by_name() {
        let schema = small().schema();
        let mut inst = BTreeMap::new();
        inst.insert("x".to_string(), serde_json::json!(4.5));
        inst.insert("c".to_string(), serde_json::json!("b"));
        assert_eq!(schema.encode_instance(&inst).unwrap(), vec![4.5, 1.0]);
        inst.insert("c".to_string(), serde_json::json!("zzz"));
        assert!(schema.encode_instance(&inst).is_err());
    }
}
