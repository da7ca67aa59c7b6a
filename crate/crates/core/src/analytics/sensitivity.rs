use serde::{Deserialize, Serialize};

use crate::formula::CellRef;
use crate::simulator::TrialStore;

use super::AnalyticsError;

pub const MIN_SENSITIVITY_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub label: String,
    pub cell: CellRef,
    pub spearman: f64,
    pub pearson: f64,
    /// `sign(ρ)·ρ²/Σρ²` over this forecast's assumptions.
    pub contribution: f64,
    pub correlated: bool,
    /// The assumption column had zero variance; ρ is recorded as 0.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSensitivity {
    pub forecast: String,
    pub cell: CellRef,
    /// Sorted by |ρ| descending; ties keep assumption order.
    pub entries: Vec<SensitivityEntry>,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either column has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Rank and linear correlation of every assumption against every forecast.
pub fn sensitivity(store: &TrialStore) -> Result<Vec<ForecastSensitivity>, AnalyticsError> {
    let n = store.completed();
    if n < MIN_SENSITIVITY_TRIALS {
        return Err(AnalyticsError::TooFewTrials {
            required: MIN_SENSITIVITY_TRIALS,
            found: n,
        });
    }
    let columns: Vec<Vec<f64>> = (0..store.assumptions.len())
        .map(|k| store.assumption_column(k))
        .collect();
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| average_ranks(c)).collect();
    let degenerate: Vec<bool> = columns.iter().map(|c| is_constant(c)).collect();

    Ok(store
        .forecasts
        .iter()
        .enumerate()
        .map(|(f, col)| {
            let y = store.forecast_column(f);
            let y_ranks = average_ranks(&y);
            let mut entries: Vec<SensitivityEntry> = store
                .assumptions
                .iter()
                .enumerate()
                .map(|(k, a)| SensitivityEntry {
                    label: a.label.clone(),
                    cell: a.cell,
                    spearman: pearson(&ranks[k], &y_ranks),
                    pearson: pearson(&columns[k], &y),
                    contribution: 0.0,
                    correlated: store.correlated[k],
                    degenerate: degenerate[k],
                })
                .collect();
            let total: f64 = entries.iter().map(|e| e.spearman * e.spearman).sum();
            if total > 0.0 {
                for e in &mut entries {
                    e.contribution = e.spearman.signum() * e.spearman * e.spearman / total;
                }
            }
            entries.sort_by(|a, b| b.spearman.abs().total_cmp(&a.spearman.abs()));
            ForecastSensitivity {
                forecast: col.label.clone(),
                cell: col.cell,
                entries,
            }
        })
        .collect())
}
