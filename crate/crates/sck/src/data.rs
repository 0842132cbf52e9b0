//! The rectangular dataset consumed by every estimator.
//!
//! An [`ObservationTable`] holds a binary instrument `z`, binary treatment
//! `d`, an outcome `y` (binary unless flagged otherwise), named covariate
//! columns, and optional stratum and cluster labels. Tables are immutable
//! after construction and validated on load: binary columns accept only the
//! literal tokens `0` and `1`, rows with missing mapped fields fail the load
//! with their row numbers, and both instrument arms must be populated
//! (overall and within every stratum).

use serde::{Deserialize, Serialize};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}` in input header")]
    MissingColumn(String),
    #[error("non-binary {role} value `{value}` in column `{column}` at data row {row}")]
    NonBinaryValue { role: &'static str, column: String, row: usize, value: String },
    #[error("non-numeric value `{value}` in column `{column}` at data row {row}")]
    NonNumericValue { column: String, row: usize, value: String },
    #[error("missing values in column `{column}` at data row(s) {rows:?}; complete cases are required")]
    MissingValues { column: String, rows: Vec<usize> },
    #[error("degenerate assignment arm: {detail}")]
    DegenerateArm { detail: String },
    #[error("input contains no data rows")]
    Empty,
    #[error("column `{column}` has length {got}, expected {expected}")]
    LengthMismatch { column: String, got: usize, expected: usize },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
}

/// Maps logical roles to column names in the input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub z: String,
    pub d: String,
    pub y: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub stratum: Option<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    /// When false, `y` is read as a real-valued outcome and every estimand
    /// that requires a binary outcome is reinterpreted on the
    /// treatment-effect-weighted scale.
    #[serde(default = "default_true")]
    pub y_binary: bool,
    /// Known design assignment probability, if the experiment fixed one.
    #[serde(default)]
    pub tau_known: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl ColumnMapping {
    pub fn simple(z: &str, d: &str, y: &str, covariates: &[&str]) -> Self {
        ColumnMapping {
            z: z.to_string(),
            d: d.to_string(),
            y: y.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            stratum: None,
            cluster: None,
            y_binary: true,
            tau_known: None,
        }
    }
}

/// A validated, immutable dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    z: Vec<u8>,
    d: Vec<u8>,
    y: Vec<f64>,
    y_binary: bool,
    covariate_names: Vec<String>,
    covariates: Vec<Vec<f64>>,
    stratum: Option<Vec<u32>>,
    stratum_labels: Vec<String>,
    cluster: Option<Vec<u64>>,
    cluster_labels: Vec<String>,
    tau_known: Option<f64>,
}

impl ObservationTable {
    /// Builds a table from already-parsed columns, running the same
    /// validation as the CSV loader.
    #[allow(clippy::too_many_arguments)]
    pub fn from_columns(
        z: Vec<u8>,
        d: Vec<u8>,
        y: Vec<f64>,
        y_binary: bool,
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
        stratum_labels: Option<Vec<String>>,
        tau_known: Option<f64>,
    ) -> Result<Self, DataError> {
        let n = z.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        for (name, len) in [("d", d.len()), ("y", y.len())] {
            if len != n {
                return Err(DataError::LengthMismatch { column: name.into(), got: len, expected: n });
            }
        }
        for (name, col) in covariate_names.iter().zip(&covariates) {
            if col.len() != n {
                return Err(DataError::LengthMismatch {
                    column: name.clone(),
                    got: col.len(),
                    expected: n,
                });
            }
        }
        for (i, &v) in z.iter().enumerate() {
            if v > 1 {
                return Err(DataError::NonBinaryValue {
                    role: "instrument",
                    column: "z".into(),
                    row: i + 1,
                    value: v.to_string(),
                });
            }
        }
        for (i, &v) in d.iter().enumerate() {
            if v > 1 {
                return Err(DataError::NonBinaryValue {
                    role: "treatment",
                    column: "d".into(),
                    row: i + 1,
                    value: v.to_string(),
                });
            }
        }
        if y_binary {
            if let Some((i, &v)) = y.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
                return Err(DataError::NonBinaryValue {
                    role: "outcome",
                    column: "y".into(),
                    row: i + 1,
                    value: v.to_string(),
                });
            }
        }
        let (stratum, stratum_names) = match stratum_labels {
            Some(labels) => {
                if labels.len() != n {
                    return Err(DataError::LengthMismatch {
                        column: "stratum".into(),
                        got: labels.len(),
                        expected: n,
                    });
                }
                let (codes, names) = encode_labels(&labels);
                (Some(codes), names)
            }
            None => (None, Vec::new()),
        };
        let table = ObservationTable {
            z,
            d,
            y,
            y_binary,
            covariate_names,
            covariates,
            stratum,
            stratum_labels: stratum_names,
            cluster: None,
            cluster_labels: Vec::new(),
            tau_known,
        };
        table.check_arms()?;
        Ok(table)
    }

    fn check_arms(&self) -> Result<(), DataError> {
        let n1: usize = self.z.iter().map(|&z| z as usize).sum();
        if n1 == 0 || n1 == self.n() {
            return Err(DataError::DegenerateArm {
                detail: format!(
                    "instrument takes a single value ({}) in the full sample",
                    if n1 == 0 { 0 } else { 1 }
                ),
            });
        }
        if let Some(stratum) = &self.stratum {
            for (code, label) in self.stratum_labels.iter().enumerate() {
                let mut seen = [false, false];
                for (s, &z) in stratum.iter().zip(&self.z) {
                    if *s as usize == code {
                        seen[z as usize] = true;
                    }
                }
                if !(seen[0] && seen[1]) {
                    return Err(DataError::DegenerateArm {
                        detail: format!("stratum `{label}` contains a single instrument arm"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_binary(&self) -> bool {
        self.y_binary
    }

    pub fn tau_known(&self) -> Option<f64> {
        self.tau_known
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .map(|j| self.covariates[j].as_slice())
    }

    /// Per-row stratum codes in `0..stratum_labels().len()`.
    pub fn stratum_codes(&self) -> Option<&[u32]> {
        self.stratum.as_deref()
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn cluster_ids(&self) -> Option<&[u64]> {
        self.cluster.as_deref()
    }

    /// Sample share assigned to treatment, `mean(z)`.
    pub fn sample_tau(&self) -> f64 {
        let n1: usize = self.z.iter().map(|&z| z as usize).sum();
        n1 as f64 / self.n() as f64
    }

    /// Writes the table back out in the standard CSV schema.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["z".to_string(), "d".to_string(), "y".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        if self.stratum.is_some() {
            header.push("stratum".to_string());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut record = vec![
                self.z[i].to_string(),
                self.d[i].to_string(),
                format_outcome(self.y[i], self.y_binary),
            ];
            for col in &self.covariates {
                record.push(format!("{}", col[i]));
            }
            if let (Some(s), labels) = (&self.stratum, &self.stratum_labels) {
                record.push(labels[s[i] as usize].clone());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn format_outcome(y: f64, binary: bool) -> String {
    if binary {
        format!("{}", y as u8)
    } else {
        format!("{y}")
    }
}

fn encode_labels(labels: &[String]) -> (Vec<u32>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let codes = labels
        .iter()
        .map(|l| match names.iter().position(|n| n == l) {
            Some(idx) => idx as u32,
            None => {
                names.push(l.clone());
                (names.len() - 1) as u32
            }
        })
        .collect();
    (codes, names)
}

fn is_missing(token: &str) -> bool {
    let t = token.trim();
    t.is_empty() || t == "NA" || t == "na" || t == "NaN" || t == "nan" || t == "."
}

fn parse_binary(
    token: &str,
    role: &'static str,
    column: &str,
    row: usize,
) -> Result<u8, DataError> {
    match token.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::NonBinaryValue {
            role,
            column: column.to_string(),
            row,
            value: other.to_string(),
        }),
    }
}

/// Loads and validates observations from a CSV stream with a header row.
///
/// Binary columns are parsed strictly: only the literal tokens `0` and `1`
/// are accepted, with no truthy coercion. Rows with missing values in any
/// mapped column abort the load and are reported by row number.
pub fn load_observations<R: Read>(
    source: R,
    mapping: &ColumnMapping,
) -> Result<ObservationTable, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let zi = col_index(&mapping.z)?;
    let di = col_index(&mapping.d)?;
    let yi = col_index(&mapping.y)?;
    let xi: Vec<usize> =
        mapping.covariates.iter().map(|c| col_index(c)).collect::<Result<_, _>>()?;
    let si = mapping.stratum.as_ref().map(|c| col_index(c)).transpose()?;
    let ci = mapping.cluster.as_ref().map(|c| col_index(c)).transpose()?;

    let mut z = Vec::new();
    let mut d = Vec::new();
    let mut y = Vec::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); xi.len()];
    let mut stratum_labels: Option<Vec<String>> = si.map(|_| Vec::new());
    let mut cluster_labels: Option<Vec<String>> = ci.map(|_| Vec::new());
    let mut missing: Vec<(String, usize)> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        let mut get = |idx: usize, name: &str| -> Option<String> {
            let token = record.get(idx).unwrap_or("");
            if is_missing(token) {
                missing.push((name.to_string(), row));
                None
            } else {
                Some(token.trim().to_string())
            }
        };

        let zt = get(zi, &mapping.z);
        let dt = get(di, &mapping.d);
        let yt = get(yi, &mapping.y);
        let xt: Vec<Option<String>> =
            xi.iter().zip(&mapping.covariates).map(|(&i, name)| get(i, name)).collect();
        let st = si.map(|i| get(i, mapping.stratum.as_ref().unwrap()));
        let ct = ci.map(|i| get(i, mapping.cluster.as_ref().unwrap()));

        // Missing fields are collected across the whole file before erroring
        // so the report names every bad row at once.
        let (Some(zt), Some(dt), Some(yt)) = (zt, dt, yt) else { continue };
        if xt.iter().any(Option::is_none)
            || matches!(&st, Some(None))
            || matches!(&ct, Some(None))
        {
            continue;
        }

        z.push(parse_binary(&zt, "instrument", &mapping.z, row)?);
        d.push(parse_binary(&dt, "treatment", &mapping.d, row)?);
        if mapping.y_binary {
            y.push(parse_binary(&yt, "outcome", &mapping.y, row)? as f64);
        } else {
            y.push(yt.parse::<f64>().map_err(|_| DataError::NonNumericValue {
                column: mapping.y.clone(),
                row,
                value: yt.clone(),
            })?);
        }
        for ((col, token), name) in covariates.iter_mut().zip(xt).zip(&mapping.covariates) {
            let token = token.unwrap();
            col.push(token.parse::<f64>().map_err(|_| DataError::NonNumericValue {
                column: name.clone(),
                row,
                value: token.clone(),
            })?);
        }
        if let Some(labels) = &mut stratum_labels {
            labels.push(st.unwrap().unwrap());
        }
        if let Some(labels) = &mut cluster_labels {
            labels.push(ct.unwrap().unwrap());
        }
    }

    if let Some((column, _)) = missing.first() {
        let column = column.clone();
        let rows: Vec<usize> =
            missing.iter().filter(|(c, _)| *c == column).map(|&(_, r)| r).collect();
        return Err(DataError::MissingValues { column, rows });
    }

    let mut table = ObservationTable::from_columns(
        z,
        d,
        y,
        mapping.y_binary,
        mapping.covariates.clone(),
        covariates,
        stratum_labels,
        mapping.tau_known,
    )?;
    if let Some(labels) = cluster_labels {
        let (codes, names) = encode_labels(&labels);
        table.cluster = Some(codes.into_iter().map(|c| c as u64).collect());
        table.cluster_labels = names;
    }
    Ok(table)
}

/// Reads a single column as raw strings, in row order, rejecting missing
/// values. Used for caller-chosen categorical columns (test cells) that are
/// not part of the numeric mapping.
pub fn load_raw_column<R: Read>(source: R, column: &str) -> Result<Vec<String>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| DataError::MissingColumn(column.to_string()))?;
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let token = record.get(idx).unwrap_or("");
        if is_missing(token) {
            missing.push(row_idx + 1);
        } else {
            values.push(token.trim().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(DataError::MissingValues { column: column.to_string(), rows: missing });
    }
    Ok(values)
}
