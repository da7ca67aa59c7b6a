use serde::{Deserialize, Serialize};

use crate::formula::Model;
use crate::simulator::{SimulationSpec, TrialStore};

use super::{
    certainty_of, describe, histogram, sensitivity, tornado_all, AnalyticsError, ForecastStats,
    Histogram, SensitivityEntry, Tornado,
};

/// Open ends are `None` so the JSON never carries infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertaintyEntry {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub forecast: String,
    /// `None` below two completed trials.
    pub stats: Option<ForecastStats>,
    pub histogram: Histogram,
    pub certainty: Vec<CertaintyEntry>,
    /// Empty below the sensitivity minimum.
    pub sensitivity: Vec<SensitivityEntry>,
    /// `None` when the base case cannot be evaluated.
    pub tornado: Option<Tornado>,
    /// Why a section is missing.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Statistics, histogram, target-range certainty, sensitivity and tornado
/// for every forecast. Sections that the sample is too small for, or whose
/// base case fails, are left out with a note.
pub fn forecast_reports(
    model: &Model,
    spec: &SimulationSpec,
    store: &TrialStore,
    bins: Option<usize>,
    low_quantile: f64,
    high_quantile: f64,
) -> Result<Vec<ForecastReport>, AnalyticsError> {
    let mut notes = Vec::new();
    let sens = match sensitivity(store) {
        Ok(s) => s.into_iter().map(|s| s.entries).collect(),
        Err(e @ AnalyticsError::TooFewTrials { .. }) => {
            notes.push(format!("sensitivity: {e}"));
            vec![Vec::new(); spec.forecasts.len()]
        }
        Err(e) => return Err(e),
    };
    let tornadoes: Vec<Option<Tornado>> =
        match tornado_all(model, spec, low_quantile, high_quantile) {
            Ok(t) => t.into_iter().map(Some).collect(),
            Err(e @ AnalyticsError::Base(_)) => {
                notes.push(format!("tornado: {e}"));
                vec![None; spec.forecasts.len()]
            }
            Err(e) => return Err(e),
        };
    spec.forecasts
        .iter()
        .zip(sens)
        .zip(tornadoes)
        .enumerate()
        .map(|(f, ((fc, s), t))| {
            let mut notes = notes.clone();
            let values = store.forecast_column(f);
            let certainty = match fc.target {
                Some(b) => vec![CertaintyEntry {
                    lo: finite(b.lo),
                    hi: finite(b.hi),
                    p: certainty_of(&values, b.lo, b.hi)?,
                }],
                None => Vec::new(),
            };
            let stats = match describe(&values) {
                Ok(s) => Some(s),
                Err(e @ AnalyticsError::TooFewTrials { .. }) => {
                    notes.push(format!("stats: {e}"));
                    None
                }
                Err(e) => return Err(e),
            };
            Ok(ForecastReport {
                forecast: fc.label.clone(),
                stats,
                histogram: histogram(&values, bins)?,
                certainty,
                sensitivity: s,
                tornado: t,
                notes,
            })
        })
        .collect()
}
