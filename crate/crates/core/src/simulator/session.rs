use crate::formula::{CellRef, Expr, Model};
use crate::stochastic::RandomSource;

use super::run::{empty_store, CalcErrorDossier, Plan, SimError, TrialRow, TrialStore};
use super::spec::SimulationSpec;

/// What one `step` produced.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Completed(TrialRow),
    Failed(CalcErrorDossier),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub cell: CellRef,
    pub formula: Expr,
    pub value: Option<f64>,
    /// Direct precedents with their current values.
    pub precedents: Vec<(CellRef, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown cell '{0}'")]
    UnknownCell(String),
}

/// Interactive one-trial-at-a-time execution. Draws come from the same
/// counter-based stream as `run`, so stepping then running continues the
/// sequence. Declared correlations are not applied here: induction needs
/// the whole batch.
pub struct StepSession<'m> {
    model: &'m Model,
    spec: SimulationSpec,
    plan: Plan,
    src: RandomSource,
    next: usize,
    /// Cell values of the most recent trial; partial when it failed.
    current: Vec<Option<f64>>,
    history: TrialStore,
}

impl<'m> StepSession<'m> {
    pub fn new(model: &'m Model, spec: SimulationSpec) -> Result<Self, SimError> {
        spec.validate(model)?;
        let plan = Plan::new(model, &spec);
        let history = empty_store(&spec, plan.monitored.clone());
        Ok(Self {
            model,
            src: RandomSource::new(spec.seed),
            spec,
            plan,
            next: 0,
            current: vec![None; model.cells().len()],
            history,
        })
    }

    pub fn spec(&self) -> &SimulationSpec {
        &self.spec
    }

    pub fn next_trial(&self) -> usize {
        self.next
    }

    pub fn correlations_ignored(&self) -> bool {
        !self.spec.correlation.is_identity()
    }

    /// Every trial executed since the last reset, in store form.
    pub fn history(&self) -> &TrialStore {
        &self.history
    }

    fn draw(&self, trial: usize) -> Vec<f64> {
        self.spec
            .assumptions
            .iter()
            .enumerate()
            .map(|(k, a)| {
                a.distribution
                    .sample_inverse(self.src.uniform_for(trial as u64, k as u64))
            })
            .collect()
    }

    pub fn step(&mut self) -> StepOutcome {
        let trial = self.next;
        self.next += 1;
        let assumptions = self.draw(trial);
        let (values, failure) = self
            .model
            .evaluate_partial(&self.plan.overrides(&assumptions));
        self.current = values;
        let outcome = match failure {
            None => StepOutcome::Completed(
                self.plan
                    .trial(self.model, trial, assumptions)
                    .expect("evaluation is deterministic"),
            ),
            Some(error) => StepOutcome::Failed(CalcErrorDossier {
                error,
                trial,
                assumptions,
            }),
        };
        match &outcome {
            StepOutcome::Completed(row) => self.history.rows.push(row.clone()),
            StepOutcome::Failed(d) => self.history.errors.push(d.clone()),
        }
        outcome
    }

    /// Executes `n` trials; stops early at a failure when `stop_on_error` is set.
    pub fn run(&mut self, n: usize) -> Vec<StepOutcome> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let o = self.step();
            let failed = matches!(o, StepOutcome::Failed(_));
            out.push(o);
            if failed && self.spec.stop_on_error {
                break;
            }
        }
        out
    }

    pub fn reset(&mut self) {
        self.next = 0;
        self.current = vec![None; self.model.cells().len()];
        self.history = empty_store(&self.spec, self.plan.monitored.clone());
    }

    fn lookup(&self, name: &str) -> Result<CellRef, SessionError> {
        self.model
            .resolve(name)
            .ok_or_else(|| SessionError::UnknownCell(name.to_string()))
    }

    fn value(&self, cell: CellRef) -> Option<f64> {
        self.model.slot(cell).and_then(|s| self.current[s])
    }

    /// Current value of a cell; `None` before any step or past a failure.
    pub fn show(&self, name: &str) -> Result<(CellRef, Option<f64>), SessionError> {
        let cell = self.lookup(name)?;
        Ok((cell, self.value(cell)))
    }

    pub fn trace(&self, name: &str) -> Result<Trace, SessionError> {
        let cell = self.lookup(name)?;
        let def = self.model.cell(cell).expect("resolved cells exist");
        Ok(Trace {
            cell,
            formula: def.expr.clone(),
            value: self.value(cell),
            precedents: def.precedents.iter().map(|&p| (p, self.value(p))).collect(),
        })
    }
}
