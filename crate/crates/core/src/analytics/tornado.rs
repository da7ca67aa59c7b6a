use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formula::{CalcError, CellRef, Model};
use crate::simulator::{replay, SimulationSpec};

use super::AnalyticsError;

pub const DEFAULT_LOW_QUANTILE: f64 = 0.10;
pub const DEFAULT_HIGH_QUANTILE: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TornadoBar {
    pub label: String,
    pub cell: CellRef,
    /// Assumption values at the low and high quantiles.
    pub low_input: f64,
    pub high_input: f64,
    /// Forecast with this assumption at its low quantile, others at medians.
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub swing: f64,
    /// Sign of `high - low`: -1, 0 or 1.
    pub direction: i8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<CalcError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tornado {
    pub forecast: String,
    pub cell: CellRef,
    pub low_quantile: f64,
    pub high_quantile: f64,
    pub base: f64,
    /// Assumption medians in spec order: the base-case input vector.
    pub medians: Vec<f64>,
    /// Sorted by swing descending; ties and failed sweeps keep assumption order.
    pub bars: Vec<TornadoBar>,
}

fn direction(d: f64) -> i8 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// One-at-a-time sweeps for every forecast. Declared correlations are
/// ignored on purpose: each assumption moves alone.
pub fn tornado_all(
    model: &Model,
    spec: &SimulationSpec,
    low_quantile: f64,
    high_quantile: f64,
) -> Result<Vec<Tornado>, AnalyticsError> {
    if !(0.0 < low_quantile && low_quantile < high_quantile && high_quantile < 1.0) {
        return Err(AnalyticsError::Quantiles {
            low: low_quantile,
            high: high_quantile,
        });
    }
    spec.validate(model)?;
    let medians: Vec<f64> = spec
        .assumptions
        .iter()
        .map(|a| a.distribution.median())
        .collect();
    let forecasts = |values: &[f64]| -> Result<Vec<f64>, CalcError> {
        let eval = replay(model, spec, values).expect("spec validated")?;
        Ok(spec
            .forecasts
            .iter()
            .map(|f| eval.get(f.cell).expect("forecast cells exist"))
            .collect())
    };
    let base = forecasts(&medians).map_err(AnalyticsError::Base)?;

    type Sweep = Result<Vec<f64>, CalcError>;
    let sweeps: Vec<(Sweep, Sweep)> = spec
        .assumptions
        .par_iter()
        .enumerate()
        .map(|(k, a)| {
            let at = |q: f64| {
                let mut v = medians.clone();
                v[k] = a.distribution.sample_inverse(q);
                forecasts(&v)
            };
            (at(low_quantile), at(high_quantile))
        })
        .collect();

    Ok(spec
        .forecasts
        .iter()
        .enumerate()
        .map(|(f, fc)| {
            let mut bars: Vec<TornadoBar> = spec
                .assumptions
                .iter()
                .zip(&sweeps)
                .map(|(a, (lo, hi))| {
                    let mut bar = TornadoBar {
                        label: a.label.clone(),
                        cell: a.cell,
                        low_input: a.distribution.sample_inverse(low_quantile),
                        high_input: a.distribution.sample_inverse(high_quantile),
                        low: None,
                        high: None,
                        swing: 0.0,
                        direction: 0,
                        error: None,
                    };
                    match (lo, hi) {
                        (Ok(lo), Ok(hi)) => {
                            bar.low = Some(lo[f]);
                            bar.high = Some(hi[f]);
                            bar.swing = (hi[f] - lo[f]).abs();
                            bar.direction = direction(hi[f] - lo[f]);
                        }
                        (lo, hi) => {
                            bar.low = lo.as_ref().ok().map(|v| v[f]);
                            bar.high = hi.as_ref().ok().map(|v| v[f]);
                            bar.error = lo.as_ref().err().or(hi.as_ref().err()).cloned();
                        }
                    }
                    bar
                })
                .collect();
            bars.sort_by(|a, b| b.swing.total_cmp(&a.swing));
            Tornado {
                forecast: fc.label.clone(),
                cell: fc.cell,
                low_quantile,
                high_quantile,
                base: base[f],
                medians: medians.clone(),
                bars,
            }
        })
        .collect())
}

pub fn tornado(
    model: &Model,
    spec: &SimulationSpec,
    forecast: &str,
    low_quantile: f64,
    high_quantile: f64,
) -> Result<Tornado, AnalyticsError> {
    let i = spec
        .forecasts
        .iter()
        .position(|f| f.label == forecast || f.cell.to_string() == forecast)
        .ok_or_else(|| AnalyticsError::UnknownForecast(forecast.to_string()))?;
    Ok(tornado_all(model, spec, low_quantile, high_quantile)?.swap_remove(i))
}
