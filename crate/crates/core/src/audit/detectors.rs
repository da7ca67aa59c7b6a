use std::collections::BTreeMap;

use crate::analytics::{ForecastSensitivity, Tornado};
use crate::formula::{CalcErrorKind, CellRef};
use crate::simulator::{CalcErrorDossier, SimulationSpec, TrialStore};

use super::{AuditError, AuditFinding, FindingKind, Severity, Thresholds, MIN_AUDIT_TRIALS};

fn evidence<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn column_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Flags an assumption as disconnected from a forecast when its rank
/// correlation is indistinguishable from zero AND moving it alone leaves the
/// forecast unchanged. Disconnection is judged over the sampled region only:
/// an input feeding a branch that is never taken counts.
pub fn detect_disconnected(
    store: &TrialStore,
    sensitivity: &[ForecastSensitivity],
    tornadoes: &[Tornado],
    thresholds: Thresholds,
) -> Result<Vec<AuditFinding>, AuditError> {
    let n = store.completed();
    if n < MIN_AUDIT_TRIALS {
        return Err(AuditError::TooFewTrials {
            required: MIN_AUDIT_TRIALS,
            found: n,
        });
    }
    let rho_cut = thresholds.z * (1.0 / n as f64).sqrt();
    let mut out = Vec::new();
    for (f, (sens, tornado)) in sensitivity.iter().zip(tornadoes).enumerate() {
        let (min, max) = column_range(&store.forecast_column(f));
        let swing_cut = thresholds.epsilon * (max - min);
        for (k, a) in store.assumptions.iter().enumerate() {
            let entry = sens
                .entries
                .iter()
                .find(|e| e.cell == a.cell)
                .expect("one entry per assumption");
            let bar = tornado
                .bars
                .iter()
                .find(|b| b.cell == a.cell)
                .expect("one bar per assumption");
            if bar.error.is_some() || entry.spearman.abs() >= rho_cut || bar.swing > swing_cut {
                continue;
            }
            // the high-quantile sweep point: replays to the flat forecast
            let mut witness = tornado.medians.clone();
            witness[k] = bar.high_input;
            out.push(AuditFinding {
                kind: FindingKind::Disconnected,
                severity: Severity::Error,
                cells: vec![a.cell, sens.cell],
                message: format!(
                    "{} has no detectable influence on {}: |rank correlation| {:.4} < {:.4} and tornado swing {} <= {}",
                    a.label,
                    sens.forecast,
                    entry.spearman.abs(),
                    rho_cut,
                    bar.swing,
                    swing_cut
                ),
                evidence: evidence([
                    ("spearman", entry.spearman),
                    ("spearman_threshold", rho_cut),
                    ("swing", bar.swing),
                    ("swing_threshold", swing_cut),
                    ("forecast_min", min),
                    ("forecast_max", max),
                    ("trials", n as f64),
                ]),
                witness: Some(witness),
            });
        }
    }
    Ok(out)
}

/// Compares declared directions with the isolated (tornado) direction, which
/// is authoritative. A Spearman sign that disagrees with a confirmed
/// declaration on a correlated assumption is reported as masking.
pub fn check_signs(
    spec: &SimulationSpec,
    sensitivity: &[ForecastSensitivity],
    tornadoes: &[Tornado],
) -> Vec<AuditFinding> {
    let mut out = Vec::new();
    for e in &spec.expectations {
        let (Some(k), Some(f)) = (
            spec.assumption_index(e.assumption),
            spec.forecast_index(e.forecast),
        ) else {
            continue;
        };
        let a = &spec.assumptions[k];
        let fc = &spec.forecasts[f];
        let bar = tornadoes[f]
            .bars
            .iter()
            .find(|b| b.cell == a.cell)
            .expect("one bar per assumption");
        let entry = sensitivity[f]
            .entries
            .iter()
            .find(|x| x.cell == a.cell)
            .expect("one entry per assumption");
        let declared = e.sign.as_f64();
        let dir = f64::from(bar.direction);
        let ev = evidence([
            ("declared", declared),
            ("tornado_direction", dir),
            ("tornado_low", bar.low.unwrap_or(f64::NAN)),
            ("tornado_high", bar.high.unwrap_or(f64::NAN)),
            ("spearman", entry.spearman),
        ]);
        let ev: BTreeMap<String, f64> = ev.into_iter().filter(|(_, v)| v.is_finite()).collect();
        if bar.direction != 0 && dir != declared {
            out.push(AuditFinding {
                kind: FindingKind::SignMismatch,
                severity: Severity::Error,
                cells: vec![a.cell, fc.cell],
                message: format!(
                    "{} was declared {} for {}, but raising it alone moves the forecast {}",
                    a.label,
                    e.sign,
                    fc.label,
                    if bar.direction > 0 { "up" } else { "down" }
                ),
                evidence: ev,
                witness: None,
            });
        } else if bar.direction != 0 && entry.spearman * declared < 0.0 && entry.correlated {
            out.push(AuditFinding {
                kind: FindingKind::CorrelationMasking,
                severity: Severity::Warning,
                cells: vec![a.cell, fc.cell],
                message: format!(
                    "{} moves {} in the declared {} direction when isolated, but its rank correlation is {:.4}; a declared correlation with another assumption masks the effect",
                    a.label, fc.label, e.sign, entry.spearman
                ),
                evidence: ev,
                witness: None,
            });
        }
    }
    out
}

/// One finding per limit-declared cell that left its limits in any trial,
/// witnessed by the trial with the largest excess.
pub fn check_limits(store: &TrialStore, spec: &SimulationSpec) -> Vec<AuditFinding> {
    let mut out = Vec::new();
    for limit in &spec.limits {
        let m = store
            .monitored
            .iter()
            .position(|c| c.cell == limit.cell)
            .expect("limit cells are monitored");
        let mut count = 0usize;
        let mut worst: Option<(f64, usize)> = None;
        for (r, row) in store.rows.iter().enumerate() {
            if let Some(excess) = limit.excess(row.monitored[m]) {
                count += 1;
                if worst.is_none_or(|(w, _)| excess > w) {
                    worst = Some((excess, r));
                }
            }
        }
        let Some((excess, r)) = worst else { continue };
        let row = &store.rows[r];
        let mut ev = evidence([
            ("violations", count as f64),
            ("rate", count as f64 / store.completed() as f64),
            ("worst_value", row.monitored[m]),
            ("worst_excess", excess),
            ("worst_trial", row.trial as f64),
        ]);
        if let Some(min) = limit.min {
            ev.insert("min".into(), min);
        }
        if let Some(max) = limit.max {
            ev.insert("max".into(), max);
        }
        out.push(AuditFinding {
            kind: FindingKind::LimitViolation,
            severity: Severity::Error,
            cells: vec![limit.cell],
            message: format!(
                "{} left its theoretical limits in {} of {} trials (worst value {})",
                limit.label,
                count,
                store.completed(),
                row.monitored[m]
            ),
            evidence: ev,
            witness: Some(row.assumptions.clone()),
        });
    }
    out
}

/// Flags forecasts whose observed range is not inside the documented interval.
pub fn check_intervals(store: &TrialStore, spec: &SimulationSpec) -> Vec<AuditFinding> {
    let mut out = Vec::new();
    for iv in &spec.expected_intervals {
        let Some(f) = store.forecasts.iter().position(|c| c.cell == iv.forecast) else {
            continue;
        };
        let values = store.forecast_column(f);
        if values.is_empty() {
            continue;
        }
        let (min, max) = column_range(&values);
        if iv.lo <= min && max <= iv.hi {
            continue;
        }
        let outside = values.iter().filter(|&&v| v < iv.lo || v > iv.hi).count();
        // the trial furthest outside the interval
        let distance = |v: f64| (iv.lo - v).max(v - iv.hi);
        let worst = (0..values.len())
            .max_by(|&a, &b| {
                distance(values[a])
                    .total_cmp(&distance(values[b]))
                    .then(b.cmp(&a))
            })
            .expect("non-empty");
        out.push(AuditFinding {
            kind: FindingKind::IntervalBreach,
            severity: Severity::Error,
            cells: vec![iv.forecast],
            message: format!(
                "{} ranged over [{}, {}], outside the expected [{}, {}] in {} of {} trials",
                store.forecasts[f].label,
                min,
                max,
                iv.lo,
                iv.hi,
                outside,
                values.len()
            ),
            evidence: evidence([
                ("observed_min", min),
                ("observed_max", max),
                ("expected_lo", iv.lo),
                ("expected_hi", iv.hi),
                ("exceedance", outside as f64 / values.len() as f64),
                ("worst_value", values[worst]),
                ("worst_trial", store.rows[worst].trial as f64),
            ]),
            witness: Some(store.rows[worst].assumptions.clone()),
        });
    }
    out
}

/// Groups recorded calculation errors by (cell, kind), each with the first
/// failing trial as witness.
pub fn error_census(store: &TrialStore) -> Vec<AuditFinding> {
    let mut groups: BTreeMap<(CellRef, CalcErrorKind), Vec<&CalcErrorDossier>> = BTreeMap::new();
    for d in store.errors.iter().chain(&store.dossier) {
        groups
            .entry((d.error.cell, d.error.kind))
            .or_default()
            .push(d);
    }
    let attempted = store.attempted() as f64;
    groups
        .into_iter()
        .map(|((cell, kind), ds)| {
            let first = ds.iter().min_by_key(|d| d.trial).expect("non-empty group");
            AuditFinding {
                kind: FindingKind::ErrorCensus,
                severity: Severity::Error,
                cells: vec![cell],
                message: format!(
                    "{} raised {} in {} of {} trials",
                    cell,
                    kind.as_str(),
                    ds.len(),
                    store.attempted()
                ),
                evidence: evidence([
                    ("count", ds.len() as f64),
                    ("rate", ds.len() as f64 / attempted),
                    ("first_trial", first.trial as f64),
                ]),
                witness: Some(first.assumptions.clone()),
            }
        })
        .collect()
}
