//! Observed units, the dataset container, CSV ingestion and the outcome
//! transformations shared by every estimator.
//!
//! Treatment labels are always contiguous `1..=J` once a [`Dataset`] exists;
//! the original labels are kept in [`Dataset::label_map`] for reporting.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One observed tuple: treatment, covariates, observed time and event flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedUnit {
    pub id: String,
    /// Treatment label in `1..=J`.
    pub treatment: usize,
    pub covariates: Vec<f64>,
    /// Observed time `min(T, C)`.
    pub time: f64,
    /// `true` when the failure was observed, `false` when censored.
    pub event: bool,
}

impl ObservedUnit {
    /// Zero-based arm index.
    #[inline]
    pub fn arm(&self) -> usize {
        self.treatment - 1
    }
}

/// The two outcome transformations: the at-risk indicator `1{T >= t}` and
/// the truncation `min(T, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `1{T >= t}`; contrasts are survival probability effects.
    Survival,
    /// `min(T, t)`; contrasts are restricted mean survival effects.
    Restricted,
}

impl Transform {
    #[inline]
    pub fn apply(self, time: f64, t: f64) -> f64 {
        match self {
            Transform::Survival => {
                if time >= t {
                    1.0
                } else {
                    0.0
                }
            }
            Transform::Restricted => time.min(t),
        }
    }
}

/// A transformation together with its evaluation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformKind {
    pub transform: Transform,
    pub horizon: f64,
}

impl TransformKind {
    /// Validates `0 < horizon <= max observed time`.
    pub fn new(transform: Transform, horizon: f64, data: &Dataset) -> Result<Self> {
        let max_time = data.max_time();
        if !(horizon > 0.0 && horizon <= max_time) {
            return Err(Error::Invalid(format!(
                "horizon {horizon} outside (0, {max_time}]"
            )));
        }
        Ok(Self { transform, horizon })
    }
}

/// Applies a transformation to a unit's observed time, ignoring censoring.
pub fn transform_outcome(unit: &ObservedUnit, transform: Transform, t: f64) -> f64 {
    transform.apply(unit.time, t)
}

/// Immutable collection of units with contiguous treatment labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    units: Vec<ObservedUnit>,
    n_treatments: usize,
    covariate_names: Vec<String>,
    /// `label_map[j - 1]` is the original label of treatment `j`.
    label_map: Vec<String>,
}

impl Dataset {
    /// Builds a dataset whose units already carry labels in `1..=J`.
    pub fn new(
        units: Vec<ObservedUnit>,
        n_treatments: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let label_map = (1..=n_treatments).map(|j| j.to_string()).collect();
        Self::with_label_map(units, n_treatments, covariate_names, label_map)
    }

    pub fn with_label_map(
        units: Vec<ObservedUnit>,
        n_treatments: usize,
        covariate_names: Vec<String>,
        label_map: Vec<String>,
    ) -> Result<Self> {
        if n_treatments < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 treatments, got {n_treatments}"
            )));
        }
        if label_map.len() != n_treatments {
            return Err(Error::Invalid("label map length differs from J".into()));
        }
        let p = covariate_names.len();
        let mut counts = vec![0usize; n_treatments];
        for (row, u) in units.iter().enumerate() {
            if u.covariates.len() != p {
                return Err(Error::Row {
                    row: row + 1,
                    message: format!("expected {p} covariates, found {}", u.covariates.len()),
                });
            }
            if !(u.time.is_finite() && u.time >= 0.0) {
                return Err(Error::Row {
                    row: row + 1,
                    message: format!("observed time {} must be finite and nonnegative", u.time),
                });
            }
            if u.treatment == 0 || u.treatment > n_treatments {
                return Err(Error::Row {
                    row: row + 1,
                    message: format!("treatment {} outside 1..={n_treatments}", u.treatment),
                });
            }
            if let Some(c) = u.covariates.iter().position(|x| !x.is_finite()) {
                return Err(Error::Row {
                    row: row + 1,
                    message: format!("covariate `{}` is missing or not finite", covariate_names[c]),
                });
            }
            counts[u.arm()] += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyGroup(j + 1));
        }
        Ok(Self {
            units,
            n_treatments,
            covariate_names,
            label_map,
        })
    }

    /// Builds a dataset from raw labels, relabelling them to `1..=J` in
    /// order of first appearance.
    pub fn from_labelled(
        rows: Vec<(String, String, Vec<f64>, f64, bool)>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let mut map: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut units = Vec::with_capacity(rows.len());
        for (id, label, covariates, time, event) in rows {
            let next = labels.len() + 1;
            let treatment = *map.entry(label.clone()).or_insert_with(|| {
                labels.push(label.clone());
                next
            });
            units.push(ObservedUnit {
                id,
                treatment,
                covariates,
                time,
                event,
            });
        }
        let j = labels.len();
        Self::with_label_map(units, j, covariate_names, labels)
    }

    pub fn units(&self) -> &[ObservedUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn label_map(&self) -> &[String] {
        &self.label_map
    }

    /// Original label → contiguous label, as written to the JSON sidecar.
    pub fn label_map_json(&self) -> BTreeMap<String, String> {
        self.label_map
            .iter()
            .enumerate()
            .map(|(j, l)| ((j + 1).to_string(), l.clone()))
            .collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.units.iter().map(|u| u.event).collect()
    }

    /// Zero-based arm index per unit.
    pub fn arms(&self) -> Vec<usize> {
        self.units.iter().map(|u| u.arm()).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_treatments];
        for u in &self.units {
            counts[u.arm()] += 1;
        }
        counts
    }

    pub fn max_time(&self) -> f64 {
        self.units.iter().map(|u| u.time).fold(0.0, f64::max)
    }

    /// `N x p` covariate matrix, no intercept.
    pub fn covariate_matrix(&self) -> DMatrix<f64> {
        let p = self.n_covariates();
        DMatrix::from_fn(self.len(), p, |i, c| self.units[i].covariates[c])
    }

    /// A new dataset holding the given rows (repeats allowed). Fails if a
    /// treatment group ends up empty.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        let units = rows.iter().map(|&i| self.units[i].clone()).collect();
        Dataset::with_label_map(
            units,
            self.n_treatments,
            self.covariate_names.clone(),
            self.label_map.clone(),
        )
    }

    /// Same units with observed times and event flags replaced.
    pub fn with_outcomes(&self, times: &[f64], events: &[bool]) -> Result<Dataset> {
        let units = self
            .units
            .iter()
            .zip(times.iter().zip(events))
            .map(|(u, (&time, &event))| ObservedUnit {
                time,
                event,
                ..u.clone()
            })
            .collect();
        Dataset::with_label_map(
            units,
            self.n_treatments,
            self.covariate_names.clone(),
            self.label_map.clone(),
        )
    }

    /// SHA-256 over the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        // writing to a Vec cannot fail
        self.write_csv_to(&mut buf).expect("in-memory csv");
        hasher.update(&buf);
        hex::encode(hasher.finalize())
    }

    /// Writes `id,time,event,treatment,<covariates...>` with 12 significant
    /// digits and the original treatment labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "time".into(), "event".into(), "treatment".into()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for u in &self.units {
            let mut rec = vec![
                u.id.clone(),
                fmt12(u.time),
                if u.event { "1".into() } else { "0".into() },
                self.label_map[u.arm()].clone(),
            ];
            rec.extend(u.covariates.iter().map(|&x| fmt12(x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_label_map(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.label_map_json())?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// Decimal text with 12 significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Column names used to resolve a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub id: String,
    pub time: String,
    pub event: String,
    pub treatment: String,
    /// Covariate columns; `None` takes every remaining column in file order.
    pub covariates: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            treatment: "treatment".into(),
            covariates: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parses CSV text. Row numbers in errors count data rows from 1.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = find(&schema.id)?;
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let treat_col = find(&schema.treatment)?;
    let fixed = [id_col, time_col, event_col, treat_col];
    let (cov_cols, cov_names): (Vec<usize>, Vec<String>) = match &schema.covariates {
        Some(names) => {
            let cols = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
            (cols, names.clone())
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(c, _)| !fixed.contains(c))
            .map(|(c, h)| (c, h.trim().to_string()))
            .unzip(),
    };
    if cov_cols.is_empty() {
        return Err(Error::Invalid("at least one covariate column is required".into()));
    }

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
        let num = |c: usize, what: &str| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Row {
                row,
                message: format!("{what} `{}` is not numeric", field(c)),
            })
        };
        let time = num(time_col, &schema.time)?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Row {
                row,
                message: format!("negative or non-finite time {time}"),
            });
        }
        let event = match field(event_col) {
            "1" | "1.0" => true,
            "0" | "0.0" => false,
            other => {
                return Err(Error::Row {
                    row,
                    message: format!("event `{other}` must be 0 or 1"),
                })
            }
        };
        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (&c, name) in cov_cols.iter().zip(&cov_names) {
            let x = num(c, name)?;
            if !x.is_finite() {
                return Err(Error::Row {
                    row,
                    message: format!("covariate `{name}` is not finite"),
                });
            }
            covariates.push(x);
        }
        let label = field(treat_col).to_string();
        if label.is_empty() {
            return Err(Error::Row {
                row,
                message: "missing treatment label".into(),
            });
        }
        rows.push((field(id_col).to_string(), label, covariates, time, event));
    }
    let data = Dataset::from_labelled(rows, cov_names)?;
    if data.n_treatments() < 2 {
        return Err(Error::Invalid("fewer than two treatment groups".into()));
    }
    Ok(data)
}
