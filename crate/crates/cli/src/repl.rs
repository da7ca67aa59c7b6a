//! The `step` REPL: `step`, `show C`, `trace C`, `run N`, `reset`, `quit`.

use std::io::{BufRead, Write};
use std::path::Path;

use simaudit::simulator::{StepOutcome, StepSession};

use crate::commands::describe_dossier;
use crate::document::Loaded;
use crate::output::{errors_csv, num, out_path, trials_csv, write_file};
use crate::{exit, CliError};

const HELP: &str = "commands: step | show <cell> | trace <cell> | run <n> | reset | quit";

fn print_outcome(loaded: &Loaded, o: &StepOutcome, out: &mut dyn Write) -> std::io::Result<()> {
    match o {
        StepOutcome::Completed(row) => {
            let pairs = |labels: Vec<&str>, values: &[f64]| {
                labels
                    .into_iter()
                    .zip(values)
                    .map(|(l, v)| format!("{l}={}", num(*v)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let spec = &loaded.spec;
            writeln!(
                out,
                "trial {}: assumptions {} | forecasts {}",
                row.trial,
                pairs(
                    spec.assumptions.iter().map(|a| a.label.as_str()).collect(),
                    &row.assumptions
                ),
                pairs(
                    spec.forecasts.iter().map(|f| f.label.as_str()).collect(),
                    &row.forecasts
                )
            )
        }
        StepOutcome::Failed(d) => writeln!(out, "{}", describe_dossier(loaded, d)),
    }
}

fn value_text(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "(not computed)".into())
}

/// Runs the session until `quit` or end of input. Trials executed in the
/// session are exported as `<name>.step.csv` (and `<name>.step.errors.csv`).
pub fn session(
    loaded: &Loaded,
    dir: &Path,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut s = StepSession::new(&loaded.model, loaded.spec.clone())
        .map_err(|e| CliError::Document(e.to_string()))?;
    if s.correlations_ignored() {
        writeln!(
            out,
            "note: declared correlations are not applied when stepping; they need a full batch"
        )?;
    }
    writeln!(out, "{HELP}")?;
    let mut line = String::new();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let mut words = line.split_whitespace();
        let (cmd, arg) = (words.next(), words.next());
        match (cmd, arg) {
            (None, _) => {}
            (Some("step"), None) => print_outcome(loaded, &s.step(), out)?,
            (Some("run"), Some(n)) => match n.parse::<usize>() {
                Ok(n) => {
                    let outcomes = s.run(n);
                    let failed = outcomes
                        .iter()
                        .filter(|o| matches!(o, StepOutcome::Failed(_)))
                        .count();
                    if let Some(last) = outcomes.last() {
                        if failed > 0 || n <= 10 {
                            for o in &outcomes {
                                if n <= 10 || matches!(o, StepOutcome::Failed(_)) {
                                    print_outcome(loaded, o, out)?;
                                }
                            }
                        } else {
                            print_outcome(loaded, last, out)?;
                        }
                    }
                    writeln!(
                        out,
                        "ran {} trials ({} failed); next trial is {}",
                        outcomes.len(),
                        failed,
                        s.next_trial()
                    )?;
                }
                Err(_) => writeln!(err, "run needs a trial count\n{HELP}")?,
            },
            (Some("show"), Some(c)) => match s.show(c) {
                Ok((cell, v)) => writeln!(
                    out,
                    "{} = {}",
                    loaded.model.display_name(cell),
                    value_text(v)
                )?,
                Err(e) => writeln!(err, "{e}")?,
            },
            (Some("trace"), Some(c)) => match s.trace(c) {
                Ok(t) => {
                    writeln!(
                        out,
                        "{} = {} := {}",
                        loaded.model.display_name(t.cell),
                        value_text(t.value),
                        t.formula.to_formula()
                    )?;
                    for (p, v) in t.precedents {
                        writeln!(
                            out,
                            "  {} ({p}) = {}",
                            loaded.model.display_name(p),
                            value_text(v)
                        )?;
                    }
                }
                Err(e) => writeln!(err, "{e}")?,
            },
            (Some("reset"), None) => {
                s.reset();
                writeln!(out, "reset; next trial is 0")?;
            }
            (Some("quit"), None) => break,
            _ => writeln!(err, "unknown command: {}\n{HELP}", line.trim())?,
        }
    }

    let history = s.history();
    if history.completed() > 0 || !history.errors.is_empty() {
        let name = &loaded.document.name;
        write_file(&out_path(dir, name, "step.csv"), &trials_csv(history)?)?;
        if !history.errors.is_empty() {
            write_file(
                &out_path(dir, name, "step.errors.csv"),
                &errors_csv(history)?,
            )?;
        }
    }
    Ok(exit::CLEAN)
}
