use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{CalcError, CellRef, Evaluation, Model};
use crate::stochastic::{induce_rank_correlation, InductionError, RandomSource};

use super::spec::{SimulationSpec, SpecErrors};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation spec:\n{0}")]
    Spec(#[from] SpecErrors),
    #[error("correlation induction failed: {0}")]
    Induction(#[from] InductionError),
    #[error("all {errors} trials raised calculation errors")]
    NoSuccessfulTrials { errors: usize },
    #[error("expected {expected} assumption values, got {found}")]
    AssumptionCount { expected: usize, found: usize },
}

/// The failing cell and the complete input vector of the trial that hit it.
/// Replaying `assumptions` reproduces `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalcErrorDossier {
    pub error: CalcError,
    pub trial: usize,
    pub assumptions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub cell: CellRef,
    pub label: String,
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub assumptions: Vec<f64>,
    pub forecasts: Vec<f64>,
    /// Values of limit-declared cells, in `TrialStore::monitored` order.
    pub monitored: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStore {
    pub seed: u64,
    pub requested_trials: usize,
    pub stop_on_error: bool,
    pub assumptions: Vec<Column>,
    /// Per assumption: has a nonzero declared correlation.
    pub correlated: Vec<bool>,
    pub forecasts: Vec<Column>,
    pub monitored: Vec<Column>,
    pub rows: Vec<TrialRow>,
    /// Trials excluded in continue-on-error mode.
    pub errors: Vec<CalcErrorDossier>,
    /// Set when a stop-on-error run halted.
    pub dossier: Option<CalcErrorDossier>,
}

impl TrialStore {
    pub fn completed(&self) -> usize {
        self.rows.len()
    }

    /// Trials actually attempted: completed, errored, and the halting trial.
    pub fn attempted(&self) -> usize {
        self.rows.len() + self.errors.len() + usize::from(self.dossier.is_some())
    }

    pub fn forecast_position(&self, name: &str) -> Option<usize> {
        self.forecasts
            .iter()
            .position(|c| c.label == name || c.cell.to_string() == name)
    }

    pub fn forecast_column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.forecasts[index]).collect()
    }

    pub fn assumption_column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.assumptions[index]).collect()
    }

    pub fn monitored_column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.monitored[index]).collect()
    }

    pub fn row_by_trial(&self, trial: usize) -> Option<&TrialRow> {
        self.rows
            .binary_search_by_key(&trial, |r| r.trial)
            .ok()
            .map(|i| &self.rows[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

const PARALLEL_CHUNK: usize = 1024;

/// Draws the trial × assumption input matrix: inverse-CDF transforms of the
/// counter-based uniforms, then rank-correlation induction over the columns
/// that carry declared correlations.
pub fn sample_assumptions(spec: &SimulationSpec) -> Result<Vec<Vec<f64>>, SimError> {
    let n = spec.trials;
    let src = RandomSource::new(spec.seed);
    let mut columns: Vec<Vec<f64>> = spec
        .assumptions
        .iter()
        .enumerate()
        .map(|(k, a)| {
            (0..n)
                .into_par_iter()
                .map(|t| {
                    a.distribution
                        .sample_inverse(src.uniform_for(t as u64, k as u64))
                })
                .collect()
        })
        .collect();

    let correlated = spec.correlation.correlated();
    if !correlated.is_empty() {
        let target = spec.correlation.submatrix(&correlated);
        let block: Vec<Vec<f64>> = correlated.iter().map(|&k| columns[k].clone()).collect();
        let induced = induce_rank_correlation(&block, &target, &src)?;
        for (&k, col) in correlated.iter().zip(induced) {
            columns[k] = col;
        }
    }
    Ok((0..n)
        .map(|t| columns.iter().map(|c| c[t]).collect())
        .collect())
}

/// Which model slots a spec reads and writes.
pub(crate) struct Plan {
    assumption_slots: Vec<usize>,
    forecast_slots: Vec<usize>,
    monitored_slots: Vec<usize>,
    pub(crate) monitored: Vec<Column>,
    cells: usize,
}

impl Plan {
    pub(crate) fn new(model: &Model, spec: &SimulationSpec) -> Self {
        let slot = |c: CellRef| model.slot(c).expect("spec validated against model");
        let mut monitored: Vec<Column> = Vec::new();
        for l in &spec.limits {
            if !monitored.iter().any(|m| m.cell == l.cell) {
                monitored.push(Column {
                    cell: l.cell,
                    label: l.label.clone(),
                });
            }
        }
        Self {
            assumption_slots: spec.assumptions.iter().map(|a| slot(a.cell)).collect(),
            forecast_slots: spec.forecasts.iter().map(|f| slot(f.cell)).collect(),
            monitored_slots: monitored.iter().map(|m| slot(m.cell)).collect(),
            monitored,
            cells: model.cells().len(),
        }
    }

    pub(crate) fn overrides(&self, assumptions: &[f64]) -> Vec<Option<f64>> {
        let mut overrides = vec![None; self.cells];
        for (&slot, &v) in self.assumption_slots.iter().zip(assumptions) {
            overrides[slot] = Some(v);
        }
        overrides
    }

    pub(crate) fn evaluate<'m>(
        &self,
        model: &'m Model,
        assumptions: &[f64],
    ) -> Result<Evaluation<'m>, CalcError> {
        model.evaluate_overrides(&self.overrides(assumptions))
    }

    pub(crate) fn trial(
        &self,
        model: &Model,
        trial: usize,
        assumptions: Vec<f64>,
    ) -> Result<TrialRow, CalcErrorDossier> {
        match self.evaluate(model, &assumptions) {
            Ok(eval) => {
                let values = eval.values();
                Ok(TrialRow {
                    trial,
                    forecasts: self.forecast_slots.iter().map(|&s| values[s]).collect(),
                    monitored: self.monitored_slots.iter().map(|&s| values[s]).collect(),
                    assumptions,
                })
            }
            Err(error) => Err(CalcErrorDossier {
                error,
                trial,
                assumptions,
            }),
        }
    }
}

pub(crate) fn empty_store(spec: &SimulationSpec, monitored: Vec<Column>) -> TrialStore {
    TrialStore {
        seed: spec.seed,
        requested_trials: spec.trials,
        stop_on_error: spec.stop_on_error,
        assumptions: spec
            .assumptions
            .iter()
            .map(|a| Column {
                cell: a.cell,
                label: a.label.clone(),
            })
            .collect(),
        correlated: spec.correlated_flags(),
        forecasts: spec
            .forecasts
            .iter()
            .map(|f| Column {
                cell: f.cell,
                label: f.label.clone(),
            })
            .collect(),
        monitored,
        rows: Vec::new(),
        errors: Vec::new(),
        dossier: None,
    }
}

pub fn run(model: &Model, spec: &SimulationSpec) -> Result<TrialStore, SimError> {
    run_with(model, spec, Execution::Parallel)
}

/// Runs `spec.trials` trials. Results are identical for both execution modes.
pub fn run_with(
    model: &Model,
    spec: &SimulationSpec,
    execution: Execution,
) -> Result<TrialStore, SimError> {
    spec.validate(model)?;
    let inputs = sample_assumptions(spec)?;
    let plan = Plan::new(model, spec);
    let mut store = empty_store(spec, plan.monitored.clone());

    let chunk = match execution {
        Execution::Serial => inputs.len().max(1),
        Execution::Parallel => PARALLEL_CHUNK,
    };
    let mut inputs = inputs.into_iter().enumerate().peekable();
    'chunks: while inputs.peek().is_some() {
        let batch: Vec<(usize, Vec<f64>)> = inputs.by_ref().take(chunk).collect();
        let results: Vec<Result<TrialRow, CalcErrorDossier>> = match execution {
            Execution::Serial if spec.stop_on_error => {
                // stop evaluating at the first failure
                let mut out = Vec::new();
                for (t, a) in batch {
                    let r = plan.trial(model, t, a);
                    let failed = r.is_err();
                    out.push(r);
                    if failed {
                        break;
                    }
                }
                out
            }
            Execution::Serial => batch
                .into_iter()
                .map(|(t, a)| plan.trial(model, t, a))
                .collect(),
            Execution::Parallel => batch
                .into_par_iter()
                .map(|(t, a)| plan.trial(model, t, a))
                .collect(),
        };
        for r in results {
            match r {
                Ok(row) => store.rows.push(row),
                Err(d) if spec.stop_on_error => {
                    store.dossier = Some(d);
                    break 'chunks;
                }
                Err(d) => store.errors.push(d),
            }
        }
    }

    if store.rows.is_empty() && !store.errors.is_empty() {
        return Err(SimError::NoSuccessfulTrials {
            errors: store.errors.len(),
        });
    }
    Ok(store)
}

/// Evaluates the model on exactly these assumption values (spec order).
pub fn replay<'m>(
    model: &'m Model,
    spec: &SimulationSpec,
    assumptions: &[f64],
) -> Result<Result<Evaluation<'m>, CalcError>, SimError> {
    if assumptions.len() != spec.assumptions.len() {
        return Err(SimError::AssumptionCount {
            expected: spec.assumptions.len(),
            found: assumptions.len(),
        });
    }
    spec.validate(model)?;
    Ok(Plan::new(model, spec).evaluate(model, assumptions))
}
