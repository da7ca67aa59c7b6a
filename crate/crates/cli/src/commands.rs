use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use simaudit::analytics::{forecast_reports, scenario_filter, tornado_all, ForecastReport};
use simaudit::audit::{audit, History, HistoryRow, Severity, Thresholds};
use simaudit::formula::CellRef;
use simaudit::simulator::{run, CalcErrorDossier, SimError, TrialStore};

use crate::document::{Loaded, ModelDocument};
use crate::output::{
    errors_csv, histogram_csv, num, out_path, scenario_csv, tornado_csv, trials_csv, write_file,
    write_json,
};
use crate::{exit, repl, Cli, CliError, Command};

pub fn dispatch(
    cli: &Cli,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let trials = cli.trials.map(|t| t as usize);
    let load = |path: &Path| ModelDocument::read(path)?.load(trials, cli.seed);
    match &cli.command {
        Command::Validate { path } => validate(&load(path)?, out),
        Command::Run {
            path,
            continue_on_error,
            bins,
        } => cmd_run(
            &load(path)?,
            &cli.out,
            *continue_on_error,
            bins.map(|b| b as usize),
            out,
        ),
        Command::Tornado {
            path,
            forecast,
            low,
            high,
        } => cmd_tornado(
            &load(path)?,
            &cli.out,
            forecast.as_deref(),
            *low,
            *high,
            out,
        ),
        Command::Scenario {
            path,
            forecast,
            min,
            max,
            apply,
        } => cmd_scenario(
            &load(path)?,
            &cli.out,
            forecast.as_deref(),
            min.unwrap_or(f64::NEG_INFINITY),
            max.unwrap_or(f64::INFINITY),
            *apply,
            out,
        ),
        Command::Audit {
            path,
            history,
            z,
            epsilon,
        } => {
            let mut thresholds = Thresholds::default();
            if let Some(z) = z {
                thresholds.z = *z;
            }
            if let Some(e) = epsilon {
                thresholds.epsilon = *e;
            }
            cmd_audit(&load(path)?, &cli.out, history.as_deref(), thresholds, out)
        }
        Command::Step { path } => repl::session(&load(path)?, &cli.out, input, out, err),
    }
}

fn validate(loaded: &Loaded, out: &mut dyn Write) -> Result<i32, CliError> {
    writeln!(
        out,
        "ok: {} cells, {} assumptions, {} forecasts",
        loaded.model.cells().len(),
        loaded.spec.assumptions.len(),
        loaded.spec.forecasts.len()
    )?;
    Ok(exit::CLEAN)
}

pub fn describe_dossier(loaded: &Loaded, d: &CalcErrorDossier) -> String {
    let inputs: Vec<String> = loaded
        .spec
        .assumptions
        .iter()
        .zip(&d.assumptions)
        .map(|(a, v)| format!("{}={}", a.label, num(*v)))
        .collect();
    format!(
        "trial {}: {} at {} ({}); assumptions: {}",
        d.trial,
        d.error.kind.as_str(),
        loaded.model.display_name(d.error.cell),
        d.error.detail,
        inputs.join(", ")
    )
}

fn simulate(loaded: &Loaded, continue_on_error: bool) -> Result<TrialStore, CliError> {
    let mut spec = loaded.spec.clone();
    if continue_on_error {
        spec.stop_on_error = false;
    }
    run(&loaded.model, &spec).map_err(|e| match e {
        SimError::NoSuccessfulTrials { .. } => CliError::Calculation(e.to_string()),
        other => CliError::Document(other.to_string()),
    })
}

/// Saves and prints the dossier of a halted run; returns the exit code.
fn report_halt(
    loaded: &Loaded,
    store: &TrialStore,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<Option<i32>, CliError> {
    let Some(d) = &store.dossier else {
        return Ok(None);
    };
    let path = out_path(dir, &loaded.document.name, "dossier.json");
    write_json(&path, d)?;
    writeln!(
        out,
        "halted by a calculation error after {} completed trials",
        store.completed()
    )?;
    writeln!(out, "{}", describe_dossier(loaded, d))?;
    writeln!(out, "dossier written to {}", path.display())?;
    Ok(Some(exit::CALC_ERROR))
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    trials: usize,
    completed: usize,
    errors: usize,
}

#[derive(Serialize)]
struct RunReport<'a> {
    run: RunSummary,
    forecasts: &'a [ForecastReport],
}

fn cmd_run(
    loaded: &Loaded,
    dir: &Path,
    continue_on_error: bool,
    bins: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let name = &loaded.document.name;
    let store = simulate(loaded, continue_on_error)?;
    write_file(&out_path(dir, name, "trials.csv"), &trials_csv(&store)?)?;
    write_file(&out_path(dir, name, "errors.csv"), &errors_csv(&store)?)?;
    if let Some(code) = report_halt(loaded, &store, dir, out)? {
        return Ok(code);
    }

    let reports = forecast_reports(
        &loaded.model,
        &loaded.spec,
        &store,
        bins,
        simaudit::analytics::DEFAULT_LOW_QUANTILE,
        simaudit::analytics::DEFAULT_HIGH_QUANTILE,
    )
    .map_err(|e| CliError::Calculation(e.to_string()))?;
    for (f, r) in reports.iter().enumerate() {
        write_file(
            &out_path(dir, name, &format!("histogram{f}.csv")),
            &histogram_csv(&r.histogram)?,
        )?;
    }
    let path = out_path(dir, name, "report.json");
    write_json(
        &path,
        &RunReport {
            run: RunSummary {
                seed: store.seed,
                trials: store.requested_trials,
                completed: store.completed(),
                errors: store.errors.len(),
            },
            forecasts: &reports,
        },
    )?;

    writeln!(
        out,
        "{} trials completed ({} errors), seed {}",
        store.completed(),
        store.errors.len(),
        store.seed
    )?;
    for (f, r) in reports.iter().enumerate() {
        match &r.stats {
            Some(s) => writeln!(
                out,
                "{}: mean {} sd {} p5 {} p50 {} p95 {}",
                r.forecast,
                num(s.mean),
                num(s.std_dev),
                num(s.percentiles[1].value),
                num(s.median),
                num(s.percentiles[7].value)
            )?,
            None => {
                let values: Vec<String> = store.forecast_column(f).into_iter().map(num).collect();
                writeln!(out, "{}: {}", r.forecast, values.join(", "))?
            }
        }
        for c in &r.certainty {
            writeln!(
                out,
                "  certainty [{}, {}]: {}",
                c.lo.map(num).unwrap_or_else(|| "-inf".into()),
                c.hi.map(num).unwrap_or_else(|| "+inf".into()),
                num(c.p)
            )?;
        }
    }
    writeln!(out, "report written to {}", path.display())?;
    Ok(exit::CLEAN)
}

fn pick_forecast(loaded: &Loaded, forecast: Option<&str>) -> Result<usize, CliError> {
    if loaded.spec.forecasts.is_empty() {
        return Err(CliError::Usage("the document declares no forecasts".into()));
    }
    match forecast {
        None => Ok(0),
        Some(name) => loaded
            .spec
            .forecasts
            .iter()
            .position(|f| f.label == name || f.cell.to_string() == name)
            .ok_or_else(|| CliError::Usage(format!("unknown forecast '{name}'"))),
    }
}

fn cmd_tornado(
    loaded: &Loaded,
    dir: &Path,
    forecast: Option<&str>,
    low: f64,
    high: f64,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let f = pick_forecast(loaded, forecast)?;
    let t = tornado_all(&loaded.model, &loaded.spec, low, high)
        .map_err(|e| match e {
            simaudit::analytics::AnalyticsError::Base(_) => CliError::Calculation(e.to_string()),
            other => CliError::Usage(other.to_string()),
        })?
        .swap_remove(f);
    let name = &loaded.document.name;
    write_json(&out_path(dir, name, "tornado.json"), &t)?;
    write_file(&out_path(dir, name, "tornado.csv"), &tornado_csv(&t)?)?;
    writeln!(out, "{} base case {}", t.forecast, num(t.base))?;
    for b in &t.bars {
        match &b.error {
            None => writeln!(
                out,
                "  {}: swing {} direction {:+}",
                b.label,
                num(b.swing),
                b.direction
            )?,
            Some(e) => writeln!(
                out,
                "  {}: sweep failed, {} at {}",
                b.label,
                e.kind.as_str(),
                e.cell
            )?,
        }
    }
    Ok(exit::CLEAN)
}

fn cmd_scenario(
    loaded: &Loaded,
    dir: &Path,
    forecast: Option<&str>,
    lo: f64,
    hi: f64,
    apply: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    if lo > hi {
        return Err(CliError::Usage(format!("--min {lo} exceeds --max {hi}")));
    }
    let f = pick_forecast(loaded, forecast)?;
    let store = simulate(loaded, false)?;
    if let Some(code) = report_halt(loaded, &store, dir, out)? {
        return Ok(code);
    }
    let label = loaded.spec.forecasts[f].label.clone();
    let s = scenario_filter(&store, &label, lo, hi).map_err(|e| CliError::Usage(e.to_string()))?;
    let name = &loaded.document.name;
    let path = out_path(dir, name, "scenario.csv");
    write_file(&path, &scenario_csv(&store, &s)?)?;
    writeln!(
        out,
        "{} of {} trials have {} in [{}, {}]; written to {}",
        s.trials.len(),
        store.completed(),
        label,
        num(lo),
        num(hi),
        path.display()
    )?;
    if let Some(k) = apply {
        let t = s
            .trials
            .iter()
            .find(|t| t.trial == k)
            .ok_or_else(|| CliError::Usage(format!("trial {k} is not in the scenario")))?;
        let mut doc = loaded.document.with_values(&loaded.spec, &t.assumptions);
        doc.name = format!("{name}.scenario{k}");
        let path = out_path(dir, name, &format!("scenario{k}.json"));
        write_file(&path, format!("{}\n", doc.to_json()).as_bytes())?;
        writeln!(
            out,
            "trial {k} ({} = {}) pasted into {}",
            label,
            num(t.forecast),
            path.display()
        )?;
    }
    Ok(exit::CLEAN)
}

/// Reads a history CSV whose header names assumptions (and optionally
/// forecasts, whose columns hold observed values).
pub fn read_history(loaded: &Loaded, path: &Path) -> Result<History, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let header = reader.headers()?.clone();
    enum Col {
        Assumption,
        Observed,
    }
    let mut kinds = Vec::new();
    let mut columns: Vec<CellRef> = Vec::new();
    let mut observed: Vec<CellRef> = Vec::new();
    for name in header.iter() {
        let cell = loaded
            .model
            .resolve(name.trim())
            .ok_or_else(|| CliError::Usage(format!("history column '{name}' names no cell")))?;
        if loaded.spec.assumption_index(cell).is_some() {
            columns.push(cell);
            kinds.push(Col::Assumption);
        } else if loaded.spec.forecast_index(cell).is_some() {
            observed.push(cell);
            kinds.push(Col::Observed);
        } else {
            return Err(CliError::Usage(format!(
                "history column '{name}' is neither an assumption nor a forecast"
            )));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = HistoryRow {
            values: Vec::new(),
            observed: Vec::new(),
        };
        for (field, kind) in record.iter().zip(&kinds) {
            let field = field.trim();
            let parse = || {
                field.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("history row {i}: '{field}' is not a number"))
                })
            };
            match kind {
                Col::Assumption => row.values.push(parse()?),
                Col::Observed if field.is_empty() => row.observed.push(None),
                Col::Observed => row.observed.push(Some(parse()?)),
            }
        }
        rows.push(row);
    }
    Ok(History {
        columns,
        observed,
        rows,
    })
}

fn cmd_audit(
    loaded: &Loaded,
    dir: &Path,
    history: Option<&Path>,
    thresholds: Thresholds,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let history = history.map(|p| read_history(loaded, p)).transpose()?;
    let report = audit(&loaded.model, &loaded.spec, thresholds, history.as_ref()).map_err(|e| {
        use simaudit::audit::AuditError;
        match e {
            AuditError::Simulation(SimError::NoSuccessfulTrials { .. }) => {
                CliError::Calculation(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    })?;
    let path = out_path(dir, &loaded.document.name, "audit.json");
    write_json(&path, &report)?;
    writeln!(
        out,
        "{} findings over {} trials (seed {})",
        report.findings.len(),
        report.run.trials,
        report.run.seed
    )?;
    for f in &report.findings {
        let severity = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        writeln!(out, "  [{severity}] {:?}: {}", f.kind, f.message)?;
    }
    writeln!(out, "audit written to {}", path.display())?;
    Ok(if report.has_errors() {
        exit::AUDIT_ERRORS
    } else {
        exit::CLEAN
    })
}
