//! Case data model, ingestion and design-matrix construction.
//!
//! A [`CaseInput`] holds one alarm: one or more target KPI series, the named
//! candidate series that may explain it, and the alarm window. A [`Design`]
//! is the numeric regression problem for a single KPI. Missing values are
//! carried as masks; masked cells in `x` and `y` always hold a finite
//! placeholder so no NaN reaches the linear algebra.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BalanceError, Result};

/// Standard deviations below this mark a column as constant.
const CONSTANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Series { name: name.into(), values }
    }

    pub fn dense(name: impl Into<String>, values: &[f64]) -> Self {
        Series::new(name, values.iter().copied().map(Some).collect())
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmWindow {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CaseFile {
    timestamps: Vec<i64>,
    kpis: Vec<Series>,
    candidates: Vec<Series>,
    alarm: AlarmWindow,
}

/// One root-cause analysis case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseInput {
    pub timestamps: Vec<i64>,
    pub kpis: Vec<Series>,
    pub candidates: Vec<Series>,
    pub alarm_start: usize,
    pub alarm_end: usize,
}

impl CaseInput {
    /// Builds and validates a case.
    pub fn new(
        timestamps: Vec<i64>,
        kpis: Vec<Series>,
        candidates: Vec<Series>,
        alarm_start: usize,
        alarm_end: usize,
    ) -> Result<Self> {
        let case = CaseInput { timestamps, kpis, candidates, alarm_start, alarm_end };
        case.validate()?;
        Ok(case)
    }

    pub fn n(&self) -> usize {
        self.timestamps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let invalid = |msg: String| Err(BalanceError::Validation(msg));
        if n < 4 {
            return invalid(format!("series length {n} is below the minimum of 4"));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("timestamps must be strictly increasing".into());
        }
        if self.kpis.is_empty() {
            return invalid("case has no KPI series".into());
        }
        if self.candidates.is_empty() {
            return invalid("case has no candidate series".into());
        }
        for s in self.kpis.iter().chain(&self.candidates) {
            if s.values.len() != n {
                return invalid(format!(
                    "series '{}' has length {}, expected {n}",
                    s.name,
                    s.values.len()
                ));
            }
            if s.values.iter().flatten().any(|v| !v.is_finite()) {
                return invalid(format!("series '{}' contains a non-finite value", s.name));
            }
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.name.as_str()) {
                return invalid(format!("duplicate candidate name '{}'", c.name));
            }
        }
        if self.alarm_start > self.alarm_end {
            return invalid(format!(
                "alarm start {} exceeds alarm end {}",
                self.alarm_start, self.alarm_end
            ));
        }
        if self.alarm_end >= n {
            return invalid(format!("alarm end {} is outside [0, {n})", self.alarm_end));
        }
        if self.alarm_start == 0 {
            return invalid("alarm window leaves no normal segment before it".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CaseFile {
            timestamps: self.timestamps.clone(),
            kpis: self.kpis.clone(),
            candidates: self.candidates.clone(),
            alarm: AlarmWindow { start: self.alarm_start, end: self.alarm_end },
        };
        serde_json::to_string_pretty(&file).expect("case serialisation is infallible")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CaseFile =
            serde_json::from_str(text).map_err(|e| BalanceError::Parse(e.to_string()))?;
        CaseInput::new(file.timestamps, file.kpis, file.candidates, file.alarm.start, file.alarm.end)
    }

    /// Parses CSV text: a header row, a required `timestamp` column and one
    /// column per series. Empty cells are missing. Columns named in
    /// `kpi_names` are targets; when it is empty the first series column is
    /// the only target.
    pub fn from_csv_str(
        text: &str,
        alarm_start: usize,
        alarm_end: usize,
        kpi_names: &[String],
    ) -> Result<Self> {
        let parse_err = |e: csv::Error| BalanceError::Parse(e.to_string());
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers: Vec<String> = reader.headers().map_err(parse_err)?.iter().map(String::from).collect();
        let ts_col = headers
            .iter()
            .position(|h| h == "timestamp")
            .ok_or_else(|| BalanceError::Parse("CSV has no 'timestamp' column".into()))?;
        let series_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != ts_col).collect();
        for name in kpi_names {
            if !headers.iter().any(|h| h == name) {
                return Err(BalanceError::Validation(format!("KPI column '{name}' not found")));
            }
        }

        let mut timestamps = Vec::new();
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); series_cols.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(parse_err)?;
            let field = |c: usize| record.get(c).unwrap_or("");
            let ts = field(ts_col).parse::<i64>().map_err(|_| {
                BalanceError::Parse(format!("row {}: bad timestamp '{}'", row_idx + 1, field(ts_col)))
            })?;
            timestamps.push(ts);
            for (slot, &c) in series_cols.iter().enumerate() {
                let cell = field(c);
                let value = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        BalanceError::Parse(format!(
                            "row {}: column '{}' has non-numeric value '{cell}'",
                            row_idx + 1,
                            headers[c]
                        ))
                    })?)
                };
                columns[slot].push(value);
            }
        }

        let mut kpis = Vec::new();
        let mut candidates = Vec::new();
        for (slot, values) in columns.into_iter().enumerate() {
            let name = headers[series_cols[slot]].clone();
            let is_kpi = if kpi_names.is_empty() { slot == 0 } else { kpi_names.contains(&name) };
            let series = Series { name, values };
            if is_kpi {
                kpis.push(series);
            } else {
                candidates.push(series);
            }
        }
        CaseInput::new(timestamps, kpis, candidates, alarm_start, alarm_end)
    }
}

/// Loads a JSON case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<CaseInput> {
    let text = std::fs::read_to_string(path.as_ref())?;
    CaseInput::from_json_str(&text)
}

/// Loads a CSV case file; the alarm window is supplied by the caller.
pub fn load_case_csv(
    path: impl AsRef<Path>,
    alarm_start: usize,
    alarm_end: usize,
    kpi_names: &[String],
) -> Result<CaseInput> {
    let text = std::fs::read_to_string(path.as_ref())?;
    CaseInput::from_csv_str(&text, alarm_start, alarm_end, kpi_names)
}

/// Returns `(normal, abnormal)` as half-open index ranges.
pub fn split_windows(case: &CaseInput) -> (Range<usize>, Range<usize>) {
    (0..case.alarm_start, case.alarm_start..case.alarm_end + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub lag: u8,
    /// Original value = `offset + scale * stored value`.
    pub scale: f64,
    pub offset: f64,
    pub constant: bool,
}

/// A single-target regression problem.
///
/// `x_mask[(i, j)]` and `y_mask[i]` are `true` where the value is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub y_mask: Vec<bool>,
    pub x_mask: DMatrix<bool>,
    pub columns: Vec<ColumnMeta>,
    pub nonneg: bool,
    pub y_offset: f64,
    /// Rows `0..normal_end` form the normal segment, when known.
    pub normal_end: Option<usize>,
}

impl Design {
    /// Fully observed design with generated column names `x0, x1, ...`.
    pub fn from_dense(x: DMatrix<f64>, y: DVector<f64>) -> Self {
        let (n, p) = x.shape();
        assert_eq!(n, y.len(), "row count of x must match length of y");
        let columns = (0..p)
            .map(|j| ColumnMeta { name: format!("x{j}"), lag: 0, scale: 1.0, offset: 0.0, constant: false })
            .collect();
        Design {
            y,
            x,
            y_mask: vec![false; n],
            x_mask: DMatrix::from_element(n, p, false),
            columns,
            nonneg: false,
            y_offset: 0.0,
            normal_end: None,
        }
    }

    /// Applies a missing mask to `x`, zeroing the masked cells.
    pub fn with_x_mask(mut self, mask: DMatrix<bool>) -> Self {
        assert_eq!(mask.shape(), self.x.shape());
        for (v, &m) in self.x.iter_mut().zip(mask.iter()) {
            if m {
                *v = 0.0;
            }
        }
        self.x_mask = mask;
        self
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_missing(&self) -> bool {
        self.y_mask.iter().any(|&m| m) || self.x_mask.iter().any(|&m| m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        let invalid = |msg: &str| Err(BalanceError::Validation(msg.to_string()));
        if self.y.len() != n || self.y_mask.len() != n || self.x_mask.shape() != (n, p) {
            return invalid("design dimensions are inconsistent");
        }
        if self.columns.len() != p {
            return invalid("column metadata count differs from the number of columns");
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return invalid("design contains non-finite values");
        }
        if self.columns.iter().any(|c| !(c.scale > 0.0)) {
            return invalid("column scales must be positive");
        }
        if self.nonneg && self.columns.iter().any(|c| c.offset != 0.0) {
            return invalid("non-negative designs cannot carry column offsets");
        }
        Ok(())
    }

    /// Restricts the design to the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Design {
        let x = self.x.select_columns(cols);
        let x_mask = DMatrix::from_fn(self.n(), cols.len(), |i, k| self.x_mask[(i, cols[k])]);
        Design {
            x,
            x_mask,
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Builds the regression problem for KPI `kpi_index`.
///
/// With `use_lag`, columns `p_raw..2 p_raw` hold each candidate shifted by
/// one step; row 0 of those columns is missing.
pub fn build_design(case: &CaseInput, kpi_index: usize, use_lag: bool) -> Design {
    assert!(kpi_index < case.kpis.len(), "kpi_index {kpi_index} out of range");
    let n = case.n();
    let raw = case.candidates.len();
    let p = if use_lag { 2 * raw } else { raw };
    let mut x = DMatrix::zeros(n, p);
    let mut x_mask = DMatrix::from_element(n, p, false);
    let mut columns = Vec::with_capacity(p);
    for lag in 0..(if use_lag { 2 } else { 1 }) {
        for (j, cand) in case.candidates.iter().enumerate() {
            let col = lag * raw + j;
            for i in 0..n {
                let value = if i >= lag { cand.values[i - lag] } else { None };
                match value {
                    Some(v) => x[(i, col)] = v,
                    None => x_mask[(i, col)] = true,
                }
            }
            columns.push(ColumnMeta {
                name: cand.name.clone(),
                lag: lag as u8,
                scale: 1.0,
                offset: 0.0,
                constant: false,
            });
        }
    }
    let kpi = &case.kpis[kpi_index];
    let y = DVector::from_iterator(n, kpi.values.iter().map(|v| v.unwrap_or(0.0)));
    let y_mask = kpi.values.iter().map(Option::is_none).collect();
    Design {
        y,
        x,
        y_mask,
        x_mask,
        columns,
        nonneg: false,
        y_offset: 0.0,
        normal_end: Some(case.alarm_start),
    }
}

fn observed<'a>(values: impl Iterator<Item = (&'a f64, &'a bool)>) -> Vec<f64> {
    values.filter(|(_, &m)| !m).map(|(&v, _)| v).collect()
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Centers and scales columns over their observed entries.
///
/// Signed designs are centered and divided by the sample standard
/// deviation, and `y` is centered. Non-negative designs are only divided by
/// the standard deviation so signs are preserved. Constant columns keep
/// scale 1 and are flagged. Masked cells are reset to 0.
pub fn standardize(design: &Design) -> Design {
    let mut out = design.clone();
    let center = !design.nonneg;
    for j in 0..design.p() {
        let obs = observed(design.x.column(j).iter().zip(design.x_mask.column(j).iter()));
        let (mean, std) = mean_and_sample_std(&obs);
        let constant = std < CONSTANT_TOL;
        let offset = if center { mean } else { 0.0 };
        let scale = if constant { 1.0 } else { std };
        for i in 0..design.n() {
            out.x[(i, j)] = if design.x_mask[(i, j)] { 0.0 } else { (design.x[(i, j)] - offset) / scale };
        }
        let meta = &mut out.columns[j];
        meta.offset += meta.scale * offset;
        meta.scale *= scale;
        meta.constant = constant;
    }
    if center {
        let obs = observed(design.y.iter().zip(design.y_mask.iter()));
        let (mean, _) = mean_and_sample_std(&obs);
        for i in 0..design.n() {
            out.y[i] = if design.y_mask[i] { 0.0 } else { design.y[i] - mean };
        }
        out.y_offset += mean;
    }
    out
}
