//! Attribution scores of candidate causes against the alarm window, and the
//! report that carries them.
//!
//! All quantities are in original units: `β` is back-transformed by the
//! column scale and `Δx`, `Δy` are read from the raw case series.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::case::{split_windows, CaseInput, ColumnMeta};
use crate::error::{BalanceError, Result};

/// `|Δy|` below this makes relative scores undefined.
pub const DEGENERATE_DELTA_Y: f64 = 1e-12;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// `|β_j|`.
    Sensitivity,
    /// `|β_j x_j|` with `x_j` the abnormal-window mean.
    Salience,
    /// `|β_j Δx_j|`.
    Delta,
    /// `|β_j Δx_j / Δy|`.
    #[default]
    Relative,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 4] = [ScoreMode::Sensitivity, ScoreMode::Salience, ScoreMode::Delta, ScoreMode::Relative];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Sensitivity => "sensitivity",
            ScoreMode::Salience => "salience",
            ScoreMode::Delta => "delta",
            ScoreMode::Relative => "relative",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = BalanceError;
    fn from_str(s: &str) -> Result<Self> {
        ScoreMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BalanceError::Validation(format!("unknown score mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScore {
    pub candidate: String,
    pub lag: u8,
    pub score: f64,
    pub beta: f64,
    pub delta_x: f64,
    /// `β_j Δx_j`.
    pub signed_contribution: f64,
    pub mode: ScoreMode,
    /// Baseline or anomaly value could not be computed; the score is 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

/// Median of the non-missing values in `range`; `None` if there are none.
pub fn compute_baseline(values: &[Option<f64>], range: Range<usize>) -> Option<f64> {
    let mut obs: Vec<f64> = values[range].iter().flatten().copied().collect();
    if obs.is_empty() {
        return None;
    }
    obs.sort_by(f64::total_cmp);
    let m = obs.len() / 2;
    Some(if obs.len() % 2 == 1 { obs[m] } else { 0.5 * (obs[m - 1] + obs[m]) })
}

/// Mean of the non-missing values in `range`; `None` if there are none.
pub fn window_mean(values: &[Option<f64>], range: Range<usize>) -> Option<f64> {
    let obs: Vec<f64> = values[range].iter().flatten().copied().collect();
    if obs.is_empty() {
        None
    } else {
        Some(obs.iter().sum::<f64>() / obs.len() as f64)
    }
}

/// Per-column shifts between the abnormal window and the normal baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Deltas {
    pub delta_x: Vec<f64>,
    /// Abnormal-window mean of each column.
    pub x_anomaly: Vec<f64>,
    /// Columns whose baseline or anomaly value is unavailable.
    pub flagged: Vec<bool>,
    /// 0 when the KPI has no observed value in either window.
    pub delta_y: f64,
    pub target_flagged: bool,
}

/// Lag-`lag` copy of a series: entry `i` holds `values[i - lag]`.
fn lagged(values: &[Option<f64>], lag: usize) -> Vec<Option<f64>> {
    (0..values.len()).map(|i| if i >= lag { values[i - lag] } else { None }).collect()
}

fn shift(values: &[Option<f64>], normal: &Range<usize>, abnormal: &Range<usize>) -> Option<(f64, f64)> {
    let base = compute_baseline(values, normal.clone())?;
    let anomaly = window_mean(values, abnormal.clone())?;
    Some((anomaly - base, anomaly))
}

/// `Δx` for every design column (matched to candidates by name and lag) and
/// `Δy` for the KPI.
pub fn deltas(case: &CaseInput, columns: &[ColumnMeta], kpi_index: usize) -> Result<Deltas> {
    let kpi = case
        .kpis
        .get(kpi_index)
        .ok_or_else(|| BalanceError::Validation(format!("kpi index {kpi_index} out of range")))?;
    let (normal, abnormal) = split_windows(case);
    let mut out = Deltas {
        delta_x: Vec::with_capacity(columns.len()),
        x_anomaly: Vec::with_capacity(columns.len()),
        flagged: Vec::with_capacity(columns.len()),
        delta_y: 0.0,
        target_flagged: false,
    };
    for col in columns {
        let series = case
            .candidates
            .iter()
            .find(|c| c.name == col.name)
            .ok_or_else(|| BalanceError::Validation(format!("column '{}' is not a candidate", col.name)))?;
        match shift(&lagged(&series.values, col.lag as usize), &normal, &abnormal) {
            Some((dx, xa)) => {
                out.delta_x.push(dx);
                out.x_anomaly.push(xa);
                out.flagged.push(false);
            }
            None => {
                out.delta_x.push(0.0);
                out.x_anomaly.push(0.0);
                out.flagged.push(true);
            }
        }
    }
    match shift(&kpi.values, &normal, &abnormal) {
        Some((dy, _)) => out.delta_y = dy,
        None => out.target_flagged = true,
    }
    Ok(out)
}

/// Raw score values for one mode.
pub fn score_values(beta: &[f64], x_anomaly: &[f64], delta_x: &[f64], delta_y: f64, mode: ScoreMode) -> Result<Vec<f64>> {
    assert!(beta.len() == x_anomaly.len() && beta.len() == delta_x.len());
    if mode == ScoreMode::Relative && !(delta_y.abs() >= DEGENERATE_DELTA_Y) {
        return Err(BalanceError::DegenerateTarget(delta_y));
    }
    Ok((0..beta.len())
        .map(|j| match mode {
            ScoreMode::Sensitivity => beta[j].abs(),
            ScoreMode::Salience => (beta[j] * x_anomaly[j]).abs(),
            ScoreMode::Delta => (beta[j] * delta_x[j]).abs(),
            ScoreMode::Relative => (beta[j] * delta_x[j] / delta_y).abs(),
        })
        .collect())
}

/// Scores for every design column. Flagged columns score 0.
pub fn attribution_scores(
    columns: &[ColumnMeta],
    beta: &[f64],
    deltas: &Deltas,
    mode: ScoreMode,
) -> Result<Vec<AttributionScore>> {
    assert_eq!(columns.len(), beta.len());
    let values = score_values(beta, &deltas.x_anomaly, &deltas.delta_x, deltas.delta_y, mode)?;
    Ok(columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let flagged = deltas.flagged[j];
            AttributionScore {
                candidate: col.name.clone(),
                lag: col.lag,
                score: if flagged { 0.0 } else { values[j] },
                beta: beta[j],
                delta_x: deltas.delta_x[j],
                signed_contribution: beta[j] * deltas.delta_x[j],
                mode,
                flagged,
            }
        })
        .collect())
}

/// Score descending, then candidate name and lag ascending.
pub fn sort_scores(scores: &mut [AttributionScore]) {
    scores.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| a.candidate.cmp(&b.candidate)).then(a.lag.cmp(&b.lag))
    });
}

/// One score per candidate name: the maximum over its lag columns.
pub fn aggregate_by_name(scores: &[AttributionScore]) -> Vec<(String, f64)> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for s in scores {
        let e = best.entry(&s.candidate).or_insert(s.score);
        *e = e.max(s.score);
    }
    let mut out: Vec<(String, f64)> = best.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iters: usize,
    pub converged: bool,
    pub omega_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub name: String,
    /// Mode actually used; differs from the report mode after a fallback.
    pub mode: ScoreMode,
    pub delta_y: f64,
    pub scores: Vec<AttributionScore>,
    /// Top-ranked candidate names kept for merging.
    pub selected: Vec<String>,
    pub solver: SolverDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub schema: u32,
    pub kpis: Vec<KpiReport>,
    pub merged: Vec<String>,
    pub mode: ScoreMode,
    pub timings_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl AttributionReport {
    /// Copy with every timing set to 0, for byte comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings_ms.values_mut().for_each(|v| *v = 0.0);
        r
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Sorts each KPI's scores and warns about KPIs that selected nothing.
pub fn build_report(
    mut kpis: Vec<KpiReport>,
    merged: Vec<String>,
    mode: ScoreMode,
    timings_ms: BTreeMap<String, f64>,
    mut warnings: Vec<String>,
) -> AttributionReport {
    for k in &mut kpis {
        sort_scores(&mut k.scores);
        if k.selected.is_empty() {
            warnings.push(format!("kpi '{}': empty support after thresholding", k.name));
        }
    }
    if merged.is_empty() {
        warnings.push("no root cause selected".into());
    }
    AttributionReport { schema: REPORT_SCHEMA, kpis, merged, mode, timings_ms, warnings }
}
