//! RFC-4180 CSV ingestion and export.
//!
//! A column is numeric when every non-empty cell parses as a finite number;
//! anything else makes it categorical. Empty cells are missing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::dataset::{Column, ColumnData, Dataset, TaskKind};
use crate::error::{Error, Result};

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_missing(cell: &str) -> bool {
    cell.trim().is_empty()
}

fn infer_column(name: String, cells: Vec<String>) -> Column {
    let numeric = cells
        .iter()
        .all(|c| is_missing(c) || parse_number(c.trim()).is_some());
    let missing: Vec<bool> = cells.iter().map(|c| is_missing(c)).collect();
    if numeric {
        let values = cells
            .iter()
            .map(|c| parse_number(c.trim()).unwrap_or(0.0))
            .collect();
        Column {
            name,
            data: ColumnData::Numeric { values },
            missing,
        }
    } else {
        let mut levels: Vec<String> = Vec::new();
        let codes = cells
            .iter()
            .map(|c| {
                if is_missing(c) {
                    return 0;
                }
                match levels.iter().position(|l| l == c) {
                    Some(k) => k as u32,
                    None => {
                        levels.push(c.clone());
                        (levels.len() - 1) as u32
                    }
                }
            })
            .collect();
        Column {
            name,
            data: ColumnData::Categorical { levels, codes },
            missing,
        }
    }
}

/// Parse CSV text into a dataset with every row in the train partition.
pub fn read_csv_from<R: Read>(reader: R, name: &str, target: &str, task: TaskKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Csv("missing header row".into()));
    }
    if !headers.iter().any(|h| h == target) {
        return Err(Error::MissingColumn(target.to_string()));
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        for (j, cell) in record.iter().enumerate() {
            cells[j].push(cell.to_string());
        }
    }
    if cells[0].is_empty() {
        return Err(Error::data("CSV file has zero data rows"));
    }
    let columns = headers
        .into_iter()
        .zip(cells)
        .map(|(h, c)| infer_column(h, c))
        .collect();
    Dataset::new(name, columns, target, task)
}

pub fn load_csv(path: impl AsRef<Path>, target: &str, task: TaskKind) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv_from(file, &name, target, task)
}

pub fn write_csv_to<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.columns.iter().map(|c| c.name.as_str()))
        .map_err(|e| Error::Csv(e.to_string()))?;
    for i in 0..ds.n_rows() {
        w.write_record(ds.columns.iter().map(|c| c.cell_text(i)))
            .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(ds, file)
}
