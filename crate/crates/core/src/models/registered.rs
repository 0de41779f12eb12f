//! Models supplied from outside: a prediction callback, or a table of
//! scores aligned to dataset rows (a pseudo model).

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

pub type PredictFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A prediction function over encoded feature rows. Lives only in memory.
#[derive(Clone)]
pub struct CallableModel {
    pub name: String,
    pub func: PredictFn,
}

impl CallableModel {
    pub fn new(name: impl Into<String>, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CallableModel {
            name: name.into(),
            func: Arc::new(func),
        }
    }
}

impl fmt::Debug for CallableModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallableModel").field("name", &self.name).finish()
    }
}

impl PartialEq for CallableModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.func, &other.func)
    }
}

impl Serialize for CallableModel {
    fn serialize<S: Serializer>(&self, _: S) -> std::result::Result<S::Ok, S::Error> {
        Err(serde::ser::Error::custom(format!(
            "callable model '{}' cannot be persisted",
            self.name
        )))
    }
}

impl<'de> Deserialize<'de> for CallableModel {
    fn deserialize<D: Deserializer<'de>>(_: D) -> std::result::Result<Self, D::Error> {
        Err(serde::de::Error::custom("callable models cannot be loaded from a file"))
    }
}

/// Scores indexed by dataset row id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub scores: Vec<f64>,
}

impl ScoreTable {
    pub fn new(ds: &Dataset, scores: Vec<f64>) -> Result<ScoreTable> {
        if scores.len() != ds.n_rows() {
            return Err(Error::data(format!(
                "score table has {} rows but the dataset has {}",
                scores.len(),
                ds.n_rows()
            )));
        }
        for (i, s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::data(format!("score for row {i} is not finite")));
            }
            if ds.task == TaskKind::Binary && !(0.0..=1.0).contains(s) {
                return Err(Error::data(format!(
                    "score {s} for row {i} is outside [0, 1] for a binary task"
                )));
            }
        }
        Ok(ScoreTable { scores })
    }

    /// Reads a `row_id,score` CSV; every row id in `0..n` must appear once.
    pub fn read_from<R: Read>(ds: &Dataset, reader: R) -> Result<ScoreTable> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "row_id" || &headers[1] != "score" {
            return Err(Error::data("score file header must be `row_id,score`"));
        }
        let n = ds.n_rows();
        let mut parsed = Vec::with_capacity(n);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id: usize = rec[0]
                .parse()
                .map_err(|_| Error::data(format!("record {}: bad row_id '{}'", line + 1, &rec[0])))?;
            let score: f64 = rec[1]
                .parse()
                .map_err(|_| Error::data(format!("record {}: bad score '{}'", line + 1, &rec[1])))?;
            parsed.push((id, score));
        }
        if parsed.len() != n {
            return Err(Error::data(format!(
                "score file has {} rows but the dataset has {n}",
                parsed.len()
            )));
        }
        let mut slots: Vec<Option<f64>> = vec![None; n];
        for (id, score) in parsed {
            if id >= n {
                return Err(Error::data(format!("row_id {id} is outside the dataset (n = {n})")));
            }
            if slots[id].replace(score).is_some() {
                return Err(Error::data(format!("row_id {id} appears twice")));
            }
        }
        let scores = slots.into_iter().map(|s| s.expect("all ids present")).collect();
        ScoreTable::new(ds, scores)
    }

    pub fn load(ds: &Dataset, path: &Path) -> Result<ScoreTable> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ScoreTable::read_from(ds, file)
    }

    pub fn score(&self, row_id: usize) -> Result<f64> {
        self.scores
            .get(row_id)
            .copied()
            .ok_or_else(|| Error::data(format!("pseudo model has no score for row {row_id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn ds(task: TaskKind) -> Dataset {
        Dataset::new(
            "d",
            vec![Column::numeric("x", vec![1.0, 2.0, 3.0]), Column::numeric("y", vec![0.0, 1.0, 1.0])],
            "y",
            task,
        )
        .unwrap()
    }

    #[test]
    fn reads_rows_in_any_order() {
        let t = ScoreTable::read_from(&ds(TaskKind::Binary), "row_id,score\n2,0.9\n0,0.1\n1,0.5\n".as_bytes()).unwrap();
        assert_eq!(t.scores, vec![0.1, 0.5, 0.9]);
        assert_eq!(t.score(2).unwrap(), 0.9);
        assert!(t.score(3).is_err());
    }

    #[test]
    fn rejects_short_and_out_of_range() {
        let short = ScoreTable::read_from(&ds(TaskKind::Binary), "row_id,score\n0,0.1\n1,0.5\n".as_bytes());
        assert!(short.unwrap_err().to_string().contains("2 rows"));
        let range = ScoreTable::read_from(&ds(TaskKind::Binary), "row_id,score\n0,0.1\n1,1.2\n2,0.3\n".as_bytes());
        assert!(range.unwrap_err().to_string().contains("outside [0, 1]"));
        let dup = ScoreTable::read_from(&ds(TaskKind::Regression), "row_id,score\n0,1\n0,2\n2,3\n".as_bytes());
        assert!(dup.is_err());
        assert!(ScoreTable::read_from(&ds(TaskKind::Regression), "id,s\n0,1\n1,2\n2,3\n".as_bytes()).is_err());
        // regression scores are unbounded
        assert!(ScoreTable::read_from(&ds(TaskKind::Regression), "row_id,score\n0,-4\n1,9\n2,3\n".as_bytes()).is_ok());
    }

    #[test]
    fn callable_refuses_serialization() {
        let c = CallableModel::new("f", |r: &[f64]| r[0]);
        assert!(serde_json::to_string(&c).is_err());
        assert_eq!((c.func)(&[2.5]), 2.5);
    }
}
