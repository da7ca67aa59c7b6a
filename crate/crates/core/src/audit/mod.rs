//! Detectors that turn simulation evidence into warnings about model logic.

mod backcast;
mod detectors;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    sensitivity, tornado_all, AnalyticsError, DEFAULT_HIGH_QUANTILE, DEFAULT_LOW_QUANTILE,
};
use crate::formula::{CellRef, Model};
use crate::simulator::{run, SimError, SimulationSpec, TrialStore};

pub use backcast::{backcast, Backcast, History, HistoryRow, ResidualRow};
pub use detectors::{
    check_intervals, check_limits, check_signs, detect_disconnected, error_census,
};

pub const MIN_AUDIT_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingKind {
    Disconnected,
    SignMismatch,
    CorrelationMasking,
    LimitViolation,
    IntervalBreach,
    ErrorCensus,
    BackcastFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub kind: FindingKind,
    pub severity: Severity,
    pub cells: Vec<CellRef>,
    pub message: String,
    pub evidence: BTreeMap<String, f64>,
    /// Assumption values, in spec order, that reproduce the flagged behaviour.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Normal quantile for |ρ| under independence: the cut is `z/√n`.
    pub z: f64,
    /// Tornado swing below `epsilon·(max - min)` of the forecast counts as none.
    pub epsilon: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z: 2.58,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub findings: Vec<AuditFinding>,
    pub counts: BTreeMap<FindingKind, usize>,
    pub thresholds: Thresholds,
    pub run: RunInfo,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub backcast: Option<Backcast>,
}

impl AuditReport {
    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("audit needs at least {required} completed trials, found {found}")]
    TooFewTrials { required: usize, found: usize },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("history is empty")]
    EmptyHistory,
    #[error("history columns do not match the assumptions: {0}")]
    HistoryColumns(String),
}

/// Runs every detector over an existing store.
pub fn audit_store(
    model: &Model,
    spec: &SimulationSpec,
    store: &TrialStore,
    thresholds: Thresholds,
    history: Option<&History>,
) -> Result<AuditReport, AuditError> {
    let sens = sensitivity(store)?;
    let tornadoes = tornado_all(model, spec, DEFAULT_LOW_QUANTILE, DEFAULT_HIGH_QUANTILE)?;

    let mut findings = detect_disconnected(store, &sens, &tornadoes, thresholds)?;
    findings.extend(check_signs(spec, &sens, &tornadoes));
    findings.extend(check_limits(store, spec));
    findings.extend(check_intervals(store, spec));
    findings.extend(error_census(store));
    let backcast = match history {
        Some(h) => {
            let b = backcast(model, spec, h)?;
            findings.extend(b.findings.iter().cloned());
            Some(b)
        }
        None => None,
    };
    // stable: detector order within a kind is already deterministic
    findings.sort_by_key(|f| f.kind);

    let mut counts = BTreeMap::new();
    for f in &findings {
        *counts.entry(f.kind).or_insert(0) += 1;
    }
    Ok(AuditReport {
        findings,
        counts,
        thresholds,
        run: RunInfo {
            seed: store.seed,
            trials: store.requested_trials,
        },
        backcast,
    })
}

/// Simulates in continue-on-error mode, so the error census sees every
/// failure, then audits the result.
pub fn audit(
    model: &Model,
    spec: &SimulationSpec,
    thresholds: Thresholds,
    history: Option<&History>,
) -> Result<AuditReport, AuditError> {
    let mut spec = spec.clone();
    spec.stop_on_error = false;
    let store = run(model, &spec)?;
    audit_store(model, &spec, &store, thresholds, history)
}
