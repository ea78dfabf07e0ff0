//! Table, spec and report files.
//!
//! Table JSON:
//!
//! ```json
//! {"variables": [{"name": "A", "levels": 2}, {"name": "B", "levels": 2}],
//!  "weights": [4, 1, 2, 3]}
//! ```
//!
//! with either a dense row-major `weights` array or a sparse `cells` list of
//! `{"index": [i, j], "weight": w}` covering every cell once. Table CSV has a
//! header of variable names followed by `count`, and one row of 0-based level
//! indices and a weight per cell; level counts are inferred from the largest
//! index seen.
//!
//! Floats are written in shortest round-trip form, so a written table reads
//! back to the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MllError, Result};
use crate::table::Table;
use crate::tensor::Cells;
use crate::tolerance::Tolerance;

pub const REPORT_SCHEMA: &str = "mll-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Json,
    Csv,
}

impl TableFormat {
    /// Format implied by the file extension; JSON unless it ends in `.csv`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Json,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableDef {
    pub name: String,
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellWeight {
    pub index: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub variables: Vec<VariableDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<CellWeight>>,
}

impl TableFile {
    pub fn from_table(table: &Table) -> Self {
        TableFile {
            variables: table
                .names()
                .iter()
                .zip(table.levels())
                .map(|(name, &levels)| VariableDef {
                    name: name.clone(),
                    levels,
                })
                .collect(),
            weights: Some(table.probs().data().to_vec()),
            cells: None,
        }
    }

    pub fn into_table(self, location: &str) -> Result<Table> {
        let names: Vec<String> = self.variables.iter().map(|v| v.name.clone()).collect();
        let levels: Vec<usize> = self.variables.iter().map(|v| v.levels).collect();
        let weights = match (self.weights, self.cells) {
            (Some(w), None) => w,
            (None, Some(cells)) => sparse_to_dense(&levels, cells, location)?,
            (Some(_), Some(_)) => {
                return Err(MllError::parse(
                    location,
                    "give either \"weights\" or \"cells\", not both",
                ))
            }
            (None, None) => {
                return Err(MllError::parse(
                    location,
                    "missing \"weights\" or \"cells\"",
                ))
            }
        };
        Table::with_names(names, &levels, weights)
    }
}

fn offset_of(levels: &[usize], index: &[usize]) -> Option<usize> {
    if index.len() != levels.len() || index.iter().zip(levels).any(|(i, l)| i >= l) {
        return None;
    }
    Some(
        index
            .iter()
            .zip(levels)
            .fold(0, |acc, (&i, &l)| acc * l + i),
    )
}

fn sparse_to_dense(levels: &[usize], cells: Vec<CellWeight>, location: &str) -> Result<Vec<f64>> {
    if levels.iter().any(|&l| l < 2) {
        return Err(MllError::InvalidVariables(
            "every variable needs at least 2 levels".into(),
        ));
    }
    let n: usize = levels.iter().product();
    let mut dense: Vec<Option<f64>> = vec![None; n];
    for (k, cell) in cells.iter().enumerate() {
        let at = format!("{location}: cells[{k}]");
        let off = offset_of(levels, &cell.index)
            .ok_or_else(|| MllError::parse(&at, format!("index {:?} out of range", cell.index)))?;
        if dense[off].is_some() {
            return Err(MllError::parse(
                at,
                format!("duplicate index {:?}", cell.index),
            ));
        }
        dense[off] = Some(cell.weight);
    }
    let mut cursor = Cells::new(levels.to_vec());
    let mut out = Vec::with_capacity(n);
    for w in dense {
        let index = cursor.next_cell().unwrap().to_vec();
        out.push(
            w.ok_or_else(|| MllError::parse(location, format!("missing cell index {index:?}")))?,
        );
    }
    Ok(out)
}

fn json_error(location: &str, err: serde_json::Error) -> MllError {
    MllError::parse(
        format!("{location}:{}:{}", err.line(), err.column()),
        err.to_string(),
    )
}

/// Reads a value from JSON text, reporting line and column on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str, location: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(location, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MllError::io(path, e))?;
    from_json_str(&text, &path.display().to_string())
}

pub fn parse_table_str(text: &str, format: TableFormat, location: &str) -> Result<Table> {
    match format {
        TableFormat::Json => from_json_str::<TableFile>(text, location)?.into_table(location),
        TableFormat::Csv => parse_csv(text, location),
    }
}

/// Reads a table, taking the format from `hint` or else from the extension.
pub fn parse_table(path: &Path, hint: Option<TableFormat>) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| MllError::io(path, e))?;
    let format = hint.unwrap_or_else(|| TableFormat::from_path(path));
    parse_table_str(&text, format, &path.display().to_string())
}

fn parse_csv(text: &str, location: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let at = match e.position() {
            Some(p) => format!("{location}:{}", p.line()),
            None => location.to_string(),
        };
        MllError::parse(at, e.to_string())
    };
    let mut names: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if names.len() < 2 || names.pop().as_deref() != Some("count") {
        return Err(MllError::parse(
            format!("{location}:1"),
            "header must list variable names followed by \"count\"",
        ));
    }
    let k = names.len();
    let mut rows: Vec<(u64, Vec<usize>, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let at = format!("{location}:{line}");
        let index = record
            .iter()
            .take(k)
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| MllError::parse(&at, format!("bad level index: {e}")))?;
        let weight: f64 = record[k]
            .parse()
            .map_err(|e| MllError::parse(&at, format!("bad count: {e}")))?;
        rows.push((line, index, weight));
    }
    let levels: Vec<usize> = (0..k)
        .map(|j| rows.iter().map(|r| r.1[j] + 1).max().unwrap_or(0))
        .collect();
    if levels.iter().any(|&l| l < 2) {
        return Err(MllError::parse(
            location,
            "every variable needs at least 2 observed levels",
        ));
    }
    let n: usize = levels.iter().product();
    let mut dense: Vec<Option<f64>> = vec![None; n];
    for (line, index, weight) in rows {
        let off = offset_of(&levels, &index).expect("levels cover every index");
        if dense[off].is_some() {
            return Err(MllError::parse(
                format!("{location}:{line}"),
                format!("duplicate cell index {index:?}"),
            ));
        }
        dense[off] = Some(weight);
    }
    let mut cursor = Cells::new(levels.clone());
    let mut weights = Vec::with_capacity(n);
    for w in dense {
        let index = cursor.next_cell().unwrap().to_vec();
        weights.push(
            w.ok_or_else(|| MllError::parse(location, format!("missing cell index {index:?}")))?,
        );
    }
    Table::with_names(names, &levels, weights)
}

pub fn table_to_json(table: &Table) -> String {
    serde_json::to_string_pretty(&TableFile::from_table(table)).expect("table serializes")
}

pub fn table_to_csv(table: &Table) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header = table.names().iter().map(String::as_str).chain(["count"]);
    writer.write_record(header).expect("in-memory write");
    for (cell, p) in table.probs().cells().zip(table.probs().data()) {
        let mut record: Vec<String> = cell.iter().map(|c| c.to_string()).collect();
        record.push(format!("{p:?}"));
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_table(table: &Table, path: &Path, format: Option<TableFormat>) -> Result<()> {
    let text = match format.unwrap_or_else(|| TableFormat::from_path(path)) {
        TableFormat::Json => table_to_json(table) + "\n",
        TableFormat::Csv => table_to_csv(table),
    };
    fs::write(path, text).map_err(|e| MllError::io(path, e))?;
    Ok(())
}

/// The input a report was computed from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| MllError::io(path, e))?;
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Envelope around every command result.
#[derive(Clone, Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub query: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputDigest>,
    pub tolerance: Tolerance,
    pub result: T,
    pub generated_unix: u64,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, tolerance: Tolerance, result: T) -> Self {
        Report {
            schema: REPORT_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            query: BTreeMap::new(),
            inputs: Vec::new(),
            tolerance,
            result,
            generated_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn with_query(mut self, key: &str, value: impl Serialize) -> Self {
        self.query.insert(
            key.to_string(),
            serde_json::to_value(value).expect("query serializes"),
        );
        self
    }

    pub fn with_input(mut self, digest: InputDigest) -> Self {
        self.inputs.push(digest);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
