use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bpi_core::MaskedMatrix;
use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::args::Format;

/// A parsed CSV: feature columns plus an optional label column.
#[derive(Debug, Clone)]
pub struct Table {
    pub names: Vec<String>,
    pub label_name: Option<String>,
    pub labels: Option<Vec<String>>,
    pub data: MaskedMatrix,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan")
}

pub fn read_table(path: &Path, label_col: Option<&str>) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_col {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| anyhow!("{}: no column named {name:?}", path.display()))?,
        ),
        None => None,
    };
    let names: Vec<String> =
        header.iter().enumerate().filter(|(j, _)| Some(*j) != label_idx).map(|(_, h)| h.clone()).collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        if record.len() != header.len() {
            bail!("{}: data row {i} has {} fields, header has {}", path.display(), record.len(), header.len());
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if Some(j) == label_idx {
                labels.push(field.to_string());
            } else if is_missing(field) {
                values.push(f64::NAN);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    anyhow!("{}: data row {i}, column {:?}: {field:?} is not a number", path.display(), header[j])
                })?;
                if v.is_nan() {
                    bail!("{}: data row {i}, column {:?}: unexpected value {field:?}", path.display(), header[j]);
                }
                values.push(v);
            }
        }
        n += 1;
    }
    if n == 0 || p == 0 {
        bail!("{}: no data ({n} rows, {p} feature columns)", path.display());
    }
    let x = Array2::from_shape_vec((n, p), values).expect("rows checked against header");
    Ok(Table {
        names,
        label_name: label_idx.map(|j| header[j].clone()),
        labels: label_idx.map(|_| labels),
        data: MaskedMatrix::from_nan(x),
    })
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Rows to write: an optional leading `row` index, an optional label, then
/// values with missing cells left empty.
pub struct CsvOut<'a> {
    pub row_ids: Option<&'a [usize]>,
    pub label: Option<(&'a str, Vec<&'a str>)>,
    pub names: &'a [String],
    pub values: ArrayView2<'a, f64>,
    pub mask: Option<ArrayView2<'a, bool>>,
}

pub fn write_table(path: &Path, out: &CsvOut<'_>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<&str> = Vec::new();
    if out.row_ids.is_some() {
        header.push("row");
    }
    if let Some((name, _)) = &out.label {
        header.push(name);
    }
    header.extend(out.names.iter().map(String::as_str));
    w.write_record(&header)?;
    for i in 0..out.values.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ids) = out.row_ids {
            rec.push(ids[i].to_string());
        }
        if let Some((_, labels)) = &out.label {
            rec.push(labels[i].to_string());
        }
        for j in 0..out.values.ncols() {
            let observed = out.mask.is_none_or(|m| m[[i, j]]);
            rec.push(if observed { fmt_f64(out.values[[i, j]]) } else { String::new() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes a report as nested TOML or as flattened `key,value` rows.
pub fn write_report<T: Serialize>(path: &Path, value: &T, format: Format) -> Result<()> {
    let text = match format {
        Format::Toml => toml::to_string(value).context("serializing report")?,
        Format::Csv => {
            let table = toml::Table::try_from(value).context("serializing report")?;
            let mut rows = Vec::new();
            flatten("", &toml::Value::Table(table), &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        toml::Value::Float(f) => out.push((prefix.to_string(), fmt_f64(*f))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Fails early when an output file could not be created.
pub fn check_output(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(())
}

pub fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}
