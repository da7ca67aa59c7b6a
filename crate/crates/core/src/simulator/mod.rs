//! Trial orchestration: sampling, correlation, evaluation and error capture.

mod run;
mod session;
mod spec;

pub use run::{
    replay, run, run_with, sample_assumptions, CalcErrorDossier, Column, Execution, SimError,
    TrialRow, TrialStore,
};
pub use session::{SessionError, StepOutcome, StepSession, Trace};
pub use spec::{
    Assumption, Bounds, Expectation, ExpectedInterval, Forecast, Limit, Sign, SimulationSpec,
    SpecError, SpecErrors, DEFAULT_SEED, DEFAULT_TRIALS,
};
