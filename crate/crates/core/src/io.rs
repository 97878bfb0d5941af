//! Ingestion of base-method outputs and writers for result files.
//!
//! An input dataset is a comma-separated file with one row per object plus a
//! JSON sidecar:
//!
//! ```json
//! {
//!   "num_objects": 8,
//!   "num_classes": 3,
//!   "num_classifiers": 2,
//!   "num_clusterers": 2,
//!   "has_truth": true,
//!   "header": true
//! }
//! ```
//!
//! Without an explicit `columns` list the layout is: object id, the
//! classifier columns, the clusterer columns, then the optional truth column.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleInput;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "ec3/1";

/// Formats with at most 12 significant digits and no trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Id,
    Classifier,
    Clusterer,
    Truth,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub schema: Option<String>,
    pub num_objects: usize,
    pub num_classes: usize,
    pub num_classifiers: usize,
    pub num_clusterers: usize,
    #[serde(default)]
    pub has_truth: bool,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub columns: Option<Vec<ColumnRole>>,
}

impl DatasetManifest {
    pub fn roles(&self) -> Result<Vec<ColumnRole>> {
        let roles = match &self.columns {
            Some(c) => c.clone(),
            None => {
                let mut r = vec![ColumnRole::Id];
                r.extend(std::iter::repeat(ColumnRole::Classifier).take(self.num_classifiers));
                r.extend(std::iter::repeat(ColumnRole::Clusterer).take(self.num_clusterers));
                if self.has_truth {
                    r.push(ColumnRole::Truth);
                }
                r
            }
        };
        let count = |role| roles.iter().filter(|&&r| r == role).count();
        if count(ColumnRole::Id) != 1
            || count(ColumnRole::Classifier) != self.num_classifiers
            || count(ColumnRole::Clusterer) != self.num_clusterers
            || count(ColumnRole::Truth) != usize::from(self.has_truth)
        {
            return Err(Error::InvalidInput(format!(
                "column roles {roles:?} disagree with the declared counts \
                 (1 id, {} classifiers, {} clusterers, {} truth)",
                self.num_classifiers,
                self.num_clusterers,
                usize::from(self.has_truth)
            )));
        }
        Ok(roles)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub input: EnsembleInput,
}

/// `data.csv` -> `data.json`.
pub fn default_manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: e.line(),
        message: e.to_string(),
    })
}

fn open_csv(path: &Path, header: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        message: message.into(),
    }
}

/// 1-based line number of a record, falling back to its ordinal.
fn line_of(rec: &csv::StringRecord, ordinal: usize) -> usize {
    rec.position().map_or(ordinal, |p| p.line() as usize)
}

pub fn read_dataset(csv_path: &Path, manifest: &DatasetManifest) -> Result<Dataset> {
    let roles = manifest.roles()?;
    let mut reader = open_csv(csv_path, manifest.header)?;
    let mut ids = Vec::with_capacity(manifest.num_objects);
    let mut classifiers = vec![Vec::with_capacity(manifest.num_objects); manifest.num_classifiers];
    let mut clusterers = vec![Vec::with_capacity(manifest.num_objects); manifest.num_clusterers];
    let mut truth = Vec::new();
    let mut seen = HashMap::new();

    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(k + 1, |p| p.line() as usize);
            parse_err(csv_path, row, e.to_string())
        })?;
        let row = line_of(&rec, k + 1);
        if rec.len() != roles.len() {
            return Err(parse_err(
                csv_path,
                row,
                format!("expected {} fields, found {}", roles.len(), rec.len()),
            ));
        }
        let (mut ci, mut ki) = (0, 0);
        for (field, role) in rec.iter().zip(&roles) {
            match role {
                ColumnRole::Id => {
                    if field.is_empty() {
                        return Err(parse_err(csv_path, row, "empty object id"));
                    }
                    if let Some(prev) = seen.insert(field.to_string(), row) {
                        return Err(parse_err(
                            csv_path,
                            row,
                            format!("object id {field:?} already used on row {prev}"),
                        ));
                    }
                    ids.push(field.to_string());
                }
                ColumnRole::Classifier | ColumnRole::Truth => {
                    let label: usize = field.parse().map_err(|_| {
                        parse_err(csv_path, row, format!("class label {field:?} is not a positive integer"))
                    })?;
                    if label == 0 || label > manifest.num_classes {
                        return Err(parse_err(
                            csv_path,
                            row,
                            format!("class label {label} outside 1..={}", manifest.num_classes),
                        ));
                    }
                    if *role == ColumnRole::Truth {
                        truth.push(label);
                    } else {
                        classifiers[ci].push(label);
                        ci += 1;
                    }
                }
                ColumnRole::Clusterer => {
                    let id: i64 = field.parse().map_err(|_| {
                        parse_err(csv_path, row, format!("cluster id {field:?} is not an integer"))
                    })?;
                    clusterers[ki].push(id);
                    ki += 1;
                }
                ColumnRole::Ignore => {}
            }
        }
    }

    if ids.len() != manifest.num_objects {
        return Err(Error::InvalidInput(format!(
            "{}: manifest declares {} objects, file has {}",
            csv_path.display(),
            manifest.num_objects,
            ids.len()
        )));
    }
    let truth = manifest.has_truth.then_some(truth);
    let input = EnsembleInput::new(manifest.num_classes, classifiers, clusterers, truth)?;
    Ok(Dataset { ids, input })
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// run never leaves a truncated output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Rounds every non-integer number in `v` to 12 significant digits.
pub fn round_numbers(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x: f64 = fmt_num(n.as_f64().unwrap()).parse().expect("finite");
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_numbers),
        Value::Object(o) => o.values_mut().for_each(round_numbers),
        _ => {}
    }
}

/// Pretty JSON with numbers rounded by [`round_numbers`].
pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    round_numbers(&mut v);
    let mut bytes = serde_json::to_vec_pretty(&v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &json_bytes(value)?)
}

/// `object_id,p1,...,pl,label`
pub fn distributions_csv(ids: &[String], fo: ArrayView2<f64>, labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec!["object_id".to_string()];
    header.extend((1..=fo.ncols()).map(|c| format!("p{c}")));
    header.push("label".into());
    w.write_record(&header).expect("write to memory");
    for ((id, row), label) in ids.iter().zip(fo.rows()).zip(labels) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|&x| fmt_num(x)));
        rec.push(label.to_string());
        w.write_record(&rec).expect("write to memory");
    }
    w.flush().expect("write to memory");
    drop(w);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub ids: Vec<String>,
    pub scores: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Reads a file written by [`distributions_csv`].
pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let mut reader = open_csv(path, true)?;
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "object_id" || &header[header.len() - 1] != "label" {
        return Err(parse_err(path, 1, "expected header object_id,p1,...,pl,label"));
    }
    let l = header.len() - 2;
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, k + 2, e.to_string()))?;
        let row = line_of(&rec, k + 2);
        if rec.len() != l + 2 {
            return Err(parse_err(
                path,
                row,
                format!("expected {} fields, found {}", l + 2, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1).take(l) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, row, format!("score {field:?} is not a number")))?;
            flat.push(v);
        }
        let label: usize = rec[l + 1]
            .parse()
            .map_err(|_| parse_err(path, row, format!("label {:?} is not an integer", &rec[l + 1])))?;
        labels.push(label);
    }
    let scores = Array2::from_shape_vec((ids.len(), l), flat).expect("row-major fill");
    Ok(Predictions { ids, scores, labels })
}

/// Reads `object_id,label` rows. A first row whose label does not parse is
/// taken as a header.
pub fn read_truth(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut reader = open_csv(path, false)?;
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, k + 1, e.to_string()))?;
        let row = line_of(&rec, k + 1);
        if rec.len() < 2 {
            return Err(parse_err(path, row, "expected object_id,label"));
        }
        let field = &rec[rec.len() - 1];
        match field.parse::<usize>() {
            Ok(label) => out.push((rec[0].to_string(), label)),
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(parse_err(path, row, format!("label {field:?} is not an integer")));
            }
        }
    }
    Ok(out)
}
