//! Forecast statistics, sensitivity rankings, tornado sweeps and scenario
//! extraction over a completed [`TrialStore`](crate::simulator::TrialStore).

mod report;
mod scenario;
mod sensitivity;
mod stats;
mod tornado;

use thiserror::Error;

use crate::formula::CalcError;
use crate::simulator::{SpecErrors, TrialStore};

pub use report::{forecast_reports, CertaintyEntry, ForecastReport};
pub use scenario::{scenario_filter, Scenario, ScenarioTrial};
pub use sensitivity::{
    average_ranks, pearson, sensitivity, spearman, ForecastSensitivity, SensitivityEntry,
    MIN_SENSITIVITY_TRIALS,
};
pub use stats::{
    certainty, certainty_of, describe, forecast_stats, histogram, percentile, ForecastStats,
    Histogram, Percentile, MAX_DEFAULT_BINS, PERCENTILE_LEVELS,
};
pub use tornado::{
    tornado, tornado_all, Tornado, TornadoBar, DEFAULT_HIGH_QUANTILE, DEFAULT_LOW_QUANTILE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("unknown forecast '{0}'")]
    UnknownForecast(String),
    #[error("needs at least {required} completed trials, found {found}")]
    TooFewTrials { required: usize, found: usize },
    #[error("lower bound {lo} exceeds upper bound {hi}")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("quantiles must satisfy 0 < low < high < 1, got {low} and {high}")]
    Quantiles { low: f64, high: f64 },
    #[error("invalid simulation spec:\n{0}")]
    Spec(#[from] SpecErrors),
    #[error("base case evaluation failed: {0}")]
    Base(CalcError),
    #[error("histogram needs at least one bin")]
    ZeroBins,
}

pub(crate) fn forecast_values(
    store: &TrialStore,
    forecast: &str,
) -> Result<(usize, Vec<f64>), AnalyticsError> {
    let i = store
        .forecast_position(forecast)
        .ok_or_else(|| AnalyticsError::UnknownForecast(forecast.to_string()))?;
    Ok((i, store.forecast_column(i)))
}
