use serde::{Deserialize, Serialize};

use crate::simulator::TrialStore;

use super::AnalyticsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrial {
    pub trial: usize,
    pub assumptions: Vec<f64>,
    pub forecast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub forecast: String,
    pub lo: f64,
    pub hi: f64,
    pub trials: Vec<ScenarioTrial>,
}

/// Every completed trial whose forecast lies in `[lo, hi]`, in trial order.
pub fn scenario_filter(
    store: &TrialStore,
    forecast: &str,
    lo: f64,
    hi: f64,
) -> Result<Scenario, AnalyticsError> {
    if lo > hi {
        return Err(AnalyticsError::InvertedBounds { lo, hi });
    }
    let f = store
        .forecast_position(forecast)
        .ok_or_else(|| AnalyticsError::UnknownForecast(forecast.to_string()))?;
    Ok(Scenario {
        forecast: store.forecasts[f].label.clone(),
        lo,
        hi,
        trials: store
            .rows
            .iter()
            .filter(|r| lo <= r.forecasts[f] && r.forecasts[f] <= hi)
            .map(|r| ScenarioTrial {
                trial: r.trial,
                assumptions: r.assumptions.clone(),
                forecast: r.forecasts[f],
            })
            .collect(),
    })
}
