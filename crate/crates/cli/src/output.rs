//! Deterministic file writers. Floats use the shortest decimal that parses
//! back to the same value, so equal inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use simaudit::analytics::{Histogram, Scenario, Tornado};
use simaudit::simulator::{CalcErrorDossier, TrialStore};

use crate::CliError;

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn out_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}.{suffix}"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("cannot encode {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn csv_bytes(
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Usage(format!("csv: {e}")))
}

/// `trial,<assumption labels…>,<forecast labels…>`, one row per completed trial.
pub fn trials_csv(store: &TrialStore) -> Result<Vec<u8>, CliError> {
    let header = std::iter::once("trial".to_string())
        .chain(store.assumptions.iter().map(|c| c.label.clone()))
        .chain(store.forecasts.iter().map(|c| c.label.clone()))
        .collect();
    csv_bytes(
        header,
        store.rows.iter().map(|r| {
            std::iter::once(r.trial.to_string())
                .chain(r.assumptions.iter().map(|&v| num(v)))
                .chain(r.forecasts.iter().map(|&v| num(v)))
                .collect()
        }),
    )
}

/// `trial,kind,cell` for recorded errors and the halting trial, if any.
pub fn errors_csv(store: &TrialStore) -> Result<Vec<u8>, CliError> {
    let dossiers: Vec<&CalcErrorDossier> = store.errors.iter().chain(&store.dossier).collect();
    csv_bytes(
        vec!["trial".into(), "kind".into(), "cell".into()],
        dossiers.into_iter().map(|d| {
            vec![
                d.trial.to_string(),
                d.error.kind.as_str().to_string(),
                d.error.cell.to_string(),
            ]
        }),
    )
}

pub fn histogram_csv(h: &Histogram) -> Result<Vec<u8>, CliError> {
    // lower edge per bin, then the closing edge with no count
    let rows = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![num(h.edges[i]), c.to_string()])
        .chain(std::iter::once(vec![
            num(h.edges[h.counts.len()]),
            String::new(),
        ]));
    csv_bytes(vec!["edge".into(), "count".into()], rows)
}

pub fn tornado_csv(t: &Tornado) -> Result<Vec<u8>, CliError> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    csv_bytes(
        vec!["label".into(), "low".into(), "high".into()],
        t.bars
            .iter()
            .map(|b| vec![b.label.clone(), opt(b.low), opt(b.high)]),
    )
}

/// `trial,<assumption labels…>,<forecast label>`.
pub fn scenario_csv(store: &TrialStore, s: &Scenario) -> Result<Vec<u8>, CliError> {
    let header = std::iter::once("trial".to_string())
        .chain(store.assumptions.iter().map(|c| c.label.clone()))
        .chain(std::iter::once(s.forecast.clone()))
        .collect();
    csv_bytes(
        header,
        s.trials.iter().map(|t| {
            std::iter::once(t.trial.to_string())
                .chain(t.assumptions.iter().map(|&v| num(v)))
                .chain(std::iter::once(num(t.forecast)))
                .collect()
        }),
    )
}
