//! End-to-end analysis of one case: one BMFS fit per KPI, attribution,
//! per-KPI selection and merging.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::attribution::{
    attribution_scores, build_report, deltas, AttributionReport, KpiReport, ScoreMode, SolverDiagnostics,
};
use crate::bmfs::{fit, SolverOptions};
use crate::case::{build_design, standardize, CaseInput};
use crate::error::{BalanceError, Result};
use crate::merge::{merge_sets, names, rank_and_select, MergeOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub mode: ScoreMode,
    pub merge: MergeOptions,
    /// Non-negative coefficients through the log-normal branch.
    pub nonneg: bool,
    pub standardize: bool,
    /// Adds a lag-1 copy of every candidate.
    pub lag: bool,
    pub solver: SolverOptions,
    /// When false every timing is reported as 0.
    pub record_timing: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            mode: ScoreMode::Relative,
            merge: MergeOptions::default(),
            nonneg: false,
            standardize: true,
            lag: false,
            solver: SolverOptions::default(),
            record_timing: true,
        }
    }
}

/// The clock is read only when timing is recorded, since `Instant` is
/// unavailable on `wasm32-unknown-unknown`.
fn clock(record: bool) -> Option<Instant> {
    record.then(Instant::now)
}

fn ms(start: Option<Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

/// Runs the full analysis. Input problems surface as validation errors,
/// solver breakdowns as numerical ones.
pub fn analyze_case(case: &CaseInput, opts: &AnalyzeOptions) -> Result<AttributionReport> {
    case.validate()?;
    opts.merge.validate()?;
    let total = clock(opts.record_timing);
    let mut solver = opts.solver.clone();
    solver.nonneg = opts.nonneg;
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut kpis = Vec::with_capacity(case.kpis.len());
    let mut selections = Vec::with_capacity(case.kpis.len());

    for (k, kpi) in case.kpis.iter().enumerate() {
        let mut design = build_design(case, k, opts.lag);
        design.nonneg = opts.nonneg;
        if opts.standardize {
            design = standardize(&design);
        }
        let start = clock(opts.record_timing);
        let post = fit(&design, &solver)?;
        timings.insert(format!("fit:{}", kpi.name), ms(start));

        let start = clock(opts.record_timing);
        let d = deltas(case, &design.columns, k)?;
        let mut mode = opts.mode;
        let scores = match attribution_scores(&design.columns, &post.beta, &d, mode) {
            Err(BalanceError::DegenerateTarget(dy)) => {
                warnings.push(format!("kpi '{}': |delta_y| = {dy:e} is degenerate, using delta mode", kpi.name));
                mode = ScoreMode::Delta;
                attribution_scores(&design.columns, &post.beta, &d, mode)?
            }
            other => other?,
        };
        if d.target_flagged {
            warnings.push(format!("kpi '{}': no observed value in a window", kpi.name));
        }
        for s in scores.iter().filter(|s| s.flagged) {
            warnings.push(format!("kpi '{}': candidate '{}' lag {} has no baseline", kpi.name, s.candidate, s.lag));
        }
        if !post.converged {
            warnings.push(format!("kpi '{}': solver stopped after {} iterations", kpi.name, post.iters));
        }
        let selected = rank_and_select(&scores, opts.merge.kappa);
        timings.insert(format!("attribution:{}", kpi.name), ms(start));
        kpis.push(KpiReport {
            name: kpi.name.clone(),
            mode,
            delta_y: d.delta_y,
            scores,
            selected: names(&selected),
            solver: SolverDiagnostics { iters: post.iters, converged: post.converged, omega_hat: post.omega_hat },
        });
        selections.push(selected);
    }
    let merged = names(&merge_sets(&selections, opts.merge.strategy));
    timings.insert("total".into(), ms(total));
    Ok(build_report(kpis, merged, opts.mode, timings, warnings))
}
