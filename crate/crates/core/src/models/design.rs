//! Expansion of schema rows into numeric design columns (one-hot with the
//! first level dropped for categoricals).

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Frame, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    /// Index of the originating feature.
    pub feature: usize,
    pub label: String,
    /// For indicator columns, the level code this column flags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub columns: Vec<DesignColumn>,
}

impl Design {
    pub fn from_schema(schema: &Schema) -> Self {
        let mut columns = Vec::new();
        for (j, f) in schema.features.iter().enumerate() {
            match f.kind {
                ColumnKind::Numeric => columns.push(DesignColumn {
                    feature: j,
                    label: f.name.clone(),
                    level: None,
                }),
                ColumnKind::Categorical => {
                    for (k, level) in f.levels.iter().enumerate().skip(1) {
                        columns.push(DesignColumn {
                            feature: j,
                            label: format!("{}={}", f.name, level),
                            level: Some(k as u32),
                        });
                    }
                }
            }
        }
        Design { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn expand_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.columns.iter().map(|c| match c.level {
            None => row[c.feature],
            Some(level) => f64::from(row[c.feature] as u32 == level),
        }));
    }

    /// Column-major expansion of a frame.
    pub fn expand_columns(&self, frame: &Frame) -> Vec<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| {
                (0..frame.n_rows())
                    .map(|i| {
                        let v = frame.get(i, c.feature);
                        match c.level {
                            None => v,
                            Some(level) => f64::from(v as u32 == level),
                        }
                    })
                    .collect()
            })
            .collect()
    }
}
