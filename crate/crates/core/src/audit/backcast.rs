use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formula::{CellRef, Model};
use crate::simulator::{replay, SimulationSpec};
use crate::stochastic::{RandomSource, Stream};

use super::{AuditError, AuditFinding, FindingKind, Severity};

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    /// One value per history column.
    pub values: Vec<f64>,
    /// One optional observation per observed forecast.
    pub observed: Vec<Option<f64>>,
}

/// Historical records: assumption values, optionally with the forecast
/// values actually observed alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub columns: Vec<CellRef>,
    pub observed: Vec<CellRef>,
    pub rows: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub row: usize,
    pub forecast: CellRef,
    pub model: f64,
    pub observed: f64,
    /// `model - observed`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backcast {
    pub rows: usize,
    pub residuals: Vec<ResidualRow>,
    /// Mean |residual| per observed forecast over all rows with an observation.
    pub mean_abs_residual: BTreeMap<CellRef, f64>,
    /// Row indices drawn when more trials are requested than there are rows.
    pub resampled: Vec<usize>,
    /// Mean |residual| per observed forecast over the resampled draws.
    pub resampled_mean_abs_residual: BTreeMap<CellRef, f64>,
    #[serde(skip)]
    pub findings: Vec<AuditFinding>,
}

fn mean_abs(residuals: impl Iterator<Item = (CellRef, f64)>) -> BTreeMap<CellRef, f64> {
    let mut acc: BTreeMap<CellRef, (f64, usize)> = BTreeMap::new();
    for (c, r) in residuals {
        let e = acc.entry(c).or_insert((0.0, 0));
        e.0 += r.abs();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(c, (s, n))| (c, s / n as f64))
        .collect()
}

/// Replays every history row through the model, flagging rows that raise a
/// calculation error or break a declared limit. When `spec.trials` exceeds
/// the row count, rows are also resampled uniformly with the run's seed.
pub fn backcast(
    model: &Model,
    spec: &SimulationSpec,
    history: &History,
) -> Result<Backcast, AuditError> {
    if history.rows.is_empty() {
        return Err(AuditError::EmptyHistory);
    }
    // map spec assumption order onto history columns
    let mut permutation = Vec::with_capacity(spec.assumptions.len());
    for a in &spec.assumptions {
        match history.columns.iter().position(|&c| c == a.cell) {
            Some(i) => permutation.push(i),
            None => return Err(AuditError::HistoryColumns(format!("missing {}", a.label))),
        }
    }
    if history.columns.len() != spec.assumptions.len() {
        return Err(AuditError::HistoryColumns(format!(
            "{} columns for {} assumptions",
            history.columns.len(),
            spec.assumptions.len()
        )));
    }
    for &c in &history.observed {
        if spec.forecast_index(c).is_none() {
            return Err(AuditError::HistoryColumns(format!("{c} is not a forecast")));
        }
    }
    for (i, row) in history.rows.iter().enumerate() {
        if row.values.len() != history.columns.len() || row.observed.len() != history.observed.len()
        {
            return Err(AuditError::HistoryColumns(format!(
                "row {i} has the wrong width"
            )));
        }
    }

    let mut findings = Vec::new();
    let mut residuals = Vec::new();
    for (i, row) in history.rows.iter().enumerate() {
        let inputs: Vec<f64> = permutation.iter().map(|&p| row.values[p]).collect();
        match replay(model, spec, &inputs)? {
            Err(e) => findings.push(AuditFinding {
                kind: FindingKind::BackcastFailure,
                severity: Severity::Error,
                cells: vec![e.cell],
                message: format!(
                    "history row {i} raised {} at {}: {}",
                    e.kind.as_str(),
                    e.cell,
                    e.detail
                ),
                evidence: BTreeMap::from([("row".to_string(), i as f64)]),
                witness: Some(inputs),
            }),
            Ok(eval) => {
                for limit in &spec.limits {
                    let v = eval.get(limit.cell).expect("limit cells exist");
                    if let Some(excess) = limit.excess(v) {
                        findings.push(AuditFinding {
                            kind: FindingKind::BackcastFailure,
                            severity: Severity::Error,
                            cells: vec![limit.cell],
                            message: format!(
                                "history row {i} drives {} to {v}, outside its limits",
                                limit.label
                            ),
                            evidence: BTreeMap::from([
                                ("row".to_string(), i as f64),
                                ("value".to_string(), v),
                                ("excess".to_string(), excess),
                            ]),
                            witness: Some(inputs.clone()),
                        });
                    }
                }
                for (&cell, obs) in history.observed.iter().zip(&row.observed) {
                    if let Some(observed) = *obs {
                        let m = eval.get(cell).expect("forecast cells exist");
                        residuals.push(ResidualRow {
                            row: i,
                            forecast: cell,
                            model: m,
                            observed,
                            residual: m - observed,
                        });
                    }
                }
            }
        }
    }

    let rows = history.rows.len();
    let resampled: Vec<usize> = if spec.trials > rows {
        let src = RandomSource::new(spec.seed);
        (0..spec.trials as u64)
            .map(|t| ((src.uniform(Stream::Backcast, t, 0) * rows as f64) as usize).min(rows - 1))
            .collect()
    } else {
        Vec::new()
    };
    let resampled_mean_abs_residual = mean_abs(resampled.iter().flat_map(|&r| {
        residuals
            .iter()
            .filter(move |x| x.row == r)
            .map(|x| (x.forecast, x.residual))
    }));

    Ok(Backcast {
        rows,
        mean_abs_residual: mean_abs(residuals.iter().map(|x| (x.forecast, x.residual))),
        residuals,
        resampled,
        resampled_mean_abs_residual,
        findings,
    })
}
