use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{CellRef, Model};
use crate::stochastic::{CorrelationError, CorrelationMatrix, Distribution, MIN_ROWS_PER_COLUMN};

pub const DEFAULT_TRIALS: usize = 5000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption {
    pub cell: CellRef,
    pub label: String,
    pub distribution: Distribution,
}

/// Closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const ALL: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub cell: CellRef,
    pub label: String,
    pub target: Option<Bounds>,
}

/// Declared theoretical limits for a cell, checked on every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Limit {
    pub cell: CellRef,
    pub label: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Limit {
    /// Distance outside the limits, or `None` when `v` is within them.
    pub fn excess(&self, v: f64) -> Option<f64> {
        match (self.min, self.max) {
            (Some(min), _) if v < min => Some(min - v),
            (_, Some(max)) if v > max => Some(v - max),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        })
    }
}

/// The modeller's stated direction of an assumption's effect on a forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub assumption: CellRef,
    pub forecast: CellRef,
    pub sign: Sign,
}

/// Range a forecast is documented to stay within.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedInterval {
    pub forecast: CellRef,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub assumptions: Vec<Assumption>,
    /// Over `assumptions`, in order.
    pub correlation: CorrelationMatrix,
    pub forecasts: Vec<Forecast>,
    pub limits: Vec<Limit>,
    pub expectations: Vec<Expectation>,
    pub expected_intervals: Vec<ExpectedInterval>,
    pub trials: usize,
    pub seed: u64,
    pub stop_on_error: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{role} cell {cell} is not defined in the model")]
    UnknownCell { role: &'static str, cell: CellRef },
    #[error("assumption cell {0} is declared more than once")]
    DuplicateAssumption(CellRef),
    #[error("trial count must be at least 1")]
    ZeroTrials,
    #[error("correlation matrix is {found}x{found} but there are {expected} assumptions")]
    CorrelationSize { expected: usize, found: usize },
    #[error("correlation matrix: {0}")]
    Correlation(#[from] CorrelationError),
    #[error("{trials} trials are too few to correlate {columns} assumptions (need {required})")]
    TooFewTrials {
        trials: usize,
        columns: usize,
        required: usize,
    },
    #[error("expectation names {0}, which is not an assumption")]
    NotAnAssumption(CellRef),
    #[error("{role} names {cell}, which is not a forecast")]
    NotAForecast { role: &'static str, cell: CellRef },
    #[error("expectation for ({assumption}, {forecast}) is declared more than once")]
    DuplicateExpectation {
        assumption: CellRef,
        forecast: CellRef,
    },
    #[error("{role} for {cell}: lower bound {lo} exceeds upper bound {hi}")]
    InvertedBounds {
        role: &'static str,
        cell: CellRef,
        lo: f64,
        hi: f64,
    },
}

/// All problems with a spec.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl SimulationSpec {
    /// A spec with no correlations, limits or declarations and the default
    /// trial count and seed.
    pub fn new(assumptions: Vec<Assumption>, forecasts: Vec<Forecast>) -> Self {
        let k = assumptions.len();
        Self {
            assumptions,
            correlation: CorrelationMatrix::identity(k),
            forecasts,
            limits: Vec::new(),
            expectations: Vec::new(),
            expected_intervals: Vec::new(),
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            stop_on_error: true,
        }
    }

    pub fn assumption_index(&self, cell: CellRef) -> Option<usize> {
        self.assumptions.iter().position(|a| a.cell == cell)
    }

    pub fn forecast_index(&self, cell: CellRef) -> Option<usize> {
        self.forecasts.iter().position(|f| f.cell == cell)
    }

    /// Per assumption: does it carry any nonzero declared correlation?
    pub fn correlated_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.assumptions.len()];
        for i in self.correlation.correlated() {
            if i < flags.len() {
                flags[i] = true;
            }
        }
        flags
    }

    pub fn validate(&self, model: &Model) -> Result<(), SpecErrors> {
        let mut errs = Vec::new();
        let check_cell = |role: &'static str, cell: CellRef, errs: &mut Vec<SpecError>| {
            if !model.contains(cell) {
                errs.push(SpecError::UnknownCell { role, cell });
            }
        };

        let mut seen = HashSet::new();
        for a in &self.assumptions {
            check_cell("assumption", a.cell, &mut errs);
            if !seen.insert(a.cell) {
                errs.push(SpecError::DuplicateAssumption(a.cell));
            }
        }
        for f in &self.forecasts {
            check_cell("forecast", f.cell, &mut errs);
            if let Some(t) = f.target {
                if t.lo > t.hi {
                    errs.push(SpecError::InvertedBounds {
                        role: "target range",
                        cell: f.cell,
                        lo: t.lo,
                        hi: t.hi,
                    });
                }
            }
        }
        for l in &self.limits {
            check_cell("limit", l.cell, &mut errs);
            if let (Some(lo), Some(hi)) = (l.min, l.max) {
                if lo > hi {
                    errs.push(SpecError::InvertedBounds {
                        role: "limit",
                        cell: l.cell,
                        lo,
                        hi,
                    });
                }
            }
        }
        if self.trials == 0 {
            errs.push(SpecError::ZeroTrials);
        }

        let k = self.assumptions.len();
        if self.correlation.size() != k {
            errs.push(SpecError::CorrelationSize {
                expected: k,
                found: self.correlation.size(),
            });
        } else if let Err(e) = self.correlation.validate() {
            errs.push(e.into());
        } else {
            let columns = self.correlation.correlated().len();
            let required = MIN_ROWS_PER_COLUMN * columns;
            if columns > 0 && self.trials < required {
                errs.push(SpecError::TooFewTrials {
                    trials: self.trials,
                    columns,
                    required,
                });
            }
        }

        let mut pairs = HashSet::new();
        for e in &self.expectations {
            if self.assumption_index(e.assumption).is_none() {
                errs.push(SpecError::NotAnAssumption(e.assumption));
            }
            if self.forecast_index(e.forecast).is_none() {
                errs.push(SpecError::NotAForecast {
                    role: "expectation",
                    cell: e.forecast,
                });
            }
            if !pairs.insert((e.assumption, e.forecast)) {
                errs.push(SpecError::DuplicateExpectation {
                    assumption: e.assumption,
                    forecast: e.forecast,
                });
            }
        }
        for iv in &self.expected_intervals {
            if self.forecast_index(iv.forecast).is_none() {
                errs.push(SpecError::NotAForecast {
                    role: "expected interval",
                    cell: iv.forecast,
                });
            }
            if iv.lo > iv.hi {
                errs.push(SpecError::InvertedBounds {
                    role: "expected interval",
                    cell: iv.forecast,
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(SpecErrors(errs))
        }
    }
}
