//! Run, replay and single-step contracts.

use std::collections::BTreeMap;

use proptest::prelude::*;
use simaudit::formula::{CalcErrorKind, CellInput, CellRef, Model};
use simaudit::simulator::{
    replay, run, run_with, Assumption, Execution, Forecast, SimError, SimulationSpec, StepOutcome,
    StepSession,
};
use simaudit::stochastic::{CorrelationMatrix, Distribution, RandomSource};

fn c(s: &str) -> CellRef {
    s.parse().unwrap()
}

fn assumption(cell: &str, d: Distribution) -> Assumption {
    Assumption {
        cell: c(cell),
        label: cell.into(),
        distribution: d,
    }
}

fn forecast(cell: &str) -> Forecast {
    Forecast {
        cell: c(cell),
        label: cell.into(),
        target: None,
    }
}

fn sqrt_model() -> (Model, SimulationSpec) {
    let model = Model::build([
        CellInput::new(c("A1"), "0.5"),
        CellInput::new(c("A2"), "=SQRT(A1)"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![assumption("A1", Distribution::normal(0.0, 1.0).unwrap())],
        vec![forecast("A2")],
    );
    (model, spec)
}

/// A small model with three inputs, two of them correlated.
fn mixed_model(correlated: bool) -> (Model, SimulationSpec) {
    let model = Model::build([
        CellInput::new(c("A1"), "1"),
        CellInput::new(c("A2"), "1"),
        CellInput::new(c("A3"), "1"),
        CellInput::new(c("B1"), "=A1*A2-LN(A3)"),
        CellInput::new(c("B2"), "=IF(A1>0.5,B1,LN(A3-1.5))"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![
            assumption("A1", Distribution::uniform(0.0, 1.0).unwrap()),
            assumption("A2", Distribution::triangular(1.0, 2.0, 5.0).unwrap()),
            assumption("A3", Distribution::lognormal(0.0, 0.5).unwrap()),
        ],
        vec![forecast("B1"), forecast("B2")],
    );
    if correlated {
        spec.correlation = CorrelationMatrix::from_pairs(3, &[(0, 2, 0.6)]);
    }
    (model, spec)
}

#[test]
fn same_seed_gives_identical_stores() {
    let (model, mut spec) = mixed_model(true);
    spec.trials = 500;
    spec.stop_on_error = false;
    assert_eq!(run(&model, &spec).unwrap(), run(&model, &spec).unwrap());
    spec.seed += 1;
    let other = run(&model, &spec).unwrap();
    spec.seed -= 1;
    assert_ne!(run(&model, &spec).unwrap().rows, other.rows);
}

#[test]
fn serial_and_parallel_agree() {
    for correlated in [false, true] {
        let (model, mut spec) = mixed_model(correlated);
        spec.trials = 3000;
        spec.stop_on_error = false;
        let serial = run_with(&model, &spec, Execution::Serial).unwrap();
        let parallel = run_with(&model, &spec, Execution::Parallel).unwrap();
        assert_eq!(serial, parallel);
    }
    // stop mode too: both halt at the same trial
    let (model, mut spec) = sqrt_model();
    spec.trials = 3000;
    assert_eq!(
        run_with(&model, &spec, Execution::Serial).unwrap(),
        run_with(&model, &spec, Execution::Parallel).unwrap()
    );
}

#[test]
fn error_partition_in_continue_mode() {
    let (model, mut spec) = mixed_model(false);
    spec.trials = 4000;
    spec.stop_on_error = false;
    let store = run(&model, &spec).unwrap();
    assert!(
        !store.errors.is_empty(),
        "fixture should hit LN(A3-1.5) errors"
    );
    assert_eq!(store.rows.len() + store.errors.len(), spec.trials);
    let mut trials: Vec<usize> = store
        .rows
        .iter()
        .map(|r| r.trial)
        .chain(store.errors.iter().map(|d| d.trial))
        .collect();
    trials.sort_unstable();
    assert_eq!(trials, (0..spec.trials).collect::<Vec<_>>());
}

#[test]
fn stored_rows_replay_bit_exactly() {
    let (model, mut spec) = mixed_model(true);
    spec.trials = 1000;
    spec.stop_on_error = false;
    let store = run(&model, &spec).unwrap();
    for row in &store.rows {
        let eval = replay(&model, &spec, &row.assumptions).unwrap().unwrap();
        for (f, fc) in spec.forecasts.iter().enumerate() {
            assert_eq!(
                eval.get(fc.cell).unwrap().to_bits(),
                row.forecasts[f].to_bits()
            );
        }
    }
    for d in &store.errors {
        let e = replay(&model, &spec, &d.assumptions).unwrap().unwrap_err();
        assert_eq!((e.kind, e.cell), (d.error.kind, d.error.cell));
    }
    assert!(matches!(
        replay(&model, &spec, &[1.0]),
        Err(SimError::AssumptionCount {
            expected: 3,
            found: 1
        })
    ));
}

#[test]
fn sqrt_trap_halts_at_first_negative_draw() {
    let (model, mut spec) = sqrt_model();
    for seed in 0..20u64 {
        spec.seed = seed;
        let store = run(&model, &spec).unwrap();
        // oracle: scan the raw uniform stream for the first u < 0.5 (a negative normal draw)
        let src = RandomSource::new(seed);
        let first = (0..).find(|&t| src.uniform_for(t, 0) < 0.5).unwrap() as usize;
        let d = store.dossier.as_ref().expect("halts");
        assert_eq!(d.trial, first, "seed {seed}");
        assert_eq!(store.completed(), first);
        assert_eq!(
            (d.error.kind, d.error.cell),
            (CalcErrorKind::DomainError, c("A2"))
        );
        assert!(d.assumptions[0] < 0.0);
        let e = replay(&model, &spec, &d.assumptions).unwrap().unwrap_err();
        assert_eq!((e.kind, e.cell), (d.error.kind, d.error.cell));
    }
}

#[test]
fn all_trials_failing_is_a_distinct_error() {
    let model = Model::build([
        CellInput::new(c("A1"), "1"),
        CellInput::new(c("A2"), "=1/(A1-A1)"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![assumption("A1", Distribution::uniform(0.0, 1.0).unwrap())],
        vec![forecast("A2")],
    );
    spec.trials = 20;
    spec.stop_on_error = false;
    assert_eq!(
        run(&model, &spec),
        Err(SimError::NoSuccessfulTrials { errors: 20 })
    );
}

#[test]
fn single_trial_without_assumptions_is_deterministic_evaluation() {
    let model = Model::build([
        CellInput::new(c("A1"), "2"),
        CellInput::new(c("A2"), "=A1*3"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(Vec::new(), vec![forecast("A2")]);
    spec.trials = 1;
    let store = run(&model, &spec).unwrap();
    assert_eq!(store.rows.len(), 1);
    assert_eq!(
        store.rows[0].forecasts,
        vec![model
            .evaluate(&BTreeMap::new())
            .unwrap()
            .get(c("A2"))
            .unwrap()]
    );
}

#[test]
fn spec_errors_are_collected() {
    let (model, mut spec) = mixed_model(false);
    spec.trials = 0;
    spec.assumptions
        .push(assumption("Z9", Distribution::uniform(0.0, 1.0).unwrap()));
    let Err(SimError::Spec(errs)) = run(&model, &spec) else {
        panic!("expected spec errors")
    };
    assert!(errs.0.len() >= 3, "{errs}");
}

#[test]
fn stepping_follows_the_run_stream() {
    let (model, mut spec) = mixed_model(false);
    spec.trials = 101;
    spec.stop_on_error = false;
    let store = run(&model, &spec).unwrap();
    let mut s = StepSession::new(&model, spec.clone()).unwrap();
    let first = s.step();
    let rest = s.run(100);
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for o in std::iter::once(first).chain(rest) {
        match o {
            StepOutcome::Completed(r) => rows.push(r),
            StepOutcome::Failed(d) => errors.push(d),
        }
    }
    assert_eq!(rows, store.rows);
    assert_eq!(errors, store.errors);
    assert_eq!(s.history().rows, store.rows);
    s.reset();
    assert_eq!(s.next_trial(), 0);
    match s.step() {
        StepOutcome::Completed(r) => assert_eq!(r, store.rows[0]),
        StepOutcome::Failed(d) => assert_eq!(Some(&d), store.errors.first()),
    }
}

#[test]
fn step_reports_the_sqrt_failure_and_trace_shows_precedents() {
    let (model, spec) = sqrt_model();
    let src = RandomSource::new(spec.seed);
    let first = (0..).find(|&t| src.uniform_for(t, 0) < 0.5).unwrap() as usize;
    let mut s = StepSession::new(&model, spec).unwrap();
    for _ in 0..first {
        assert!(matches!(s.step(), StepOutcome::Completed(_)));
    }
    let StepOutcome::Failed(d) = s.step() else {
        panic!("trial {first} should fail")
    };
    assert_eq!(
        (d.error.kind, d.error.cell),
        (CalcErrorKind::DomainError, c("A2"))
    );
    let t = s.trace("A2").unwrap();
    assert_eq!(t.value, None);
    assert_eq!(t.precedents, vec![(c("A1"), Some(d.assumptions[0]))]);
    assert!(s.show("Q7").is_err());

    let model = Model::build([
        CellInput::new(c("A1"), "1"),
        CellInput::new(c("A2"), "=A1*3"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![assumption("A1", Distribution::uniform(0.0, 1.0).unwrap())],
        vec![forecast("A2")],
    );
    let mut s = StepSession::new(&model, spec).unwrap();
    let StepOutcome::Completed(row) = s.step() else {
        panic!()
    };
    let t = s.trace("A2").unwrap();
    assert_eq!(t.precedents, vec![(c("A1"), Some(row.assumptions[0]))]);
    assert_eq!(t.value, Some(row.forecasts[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Without declared correlations a shorter run is a prefix of a longer one.
    #[test]
    fn prefix_property(seed in any::<u64>(), m in 1usize..200, extra in 0usize..200) {
        let (model, mut spec) = mixed_model(false);
        spec.seed = seed;
        spec.stop_on_error = false;
        spec.trials = m + extra;
        let long = run(&model, &spec);
        spec.trials = m;
        let short = run(&model, &spec);
        match (long, short) {
            (Ok(long), Ok(short)) => {
                prop_assert_eq!(&long.rows[..short.rows.len()], &short.rows[..]);
                prop_assert_eq!(&long.errors[..short.errors.len()], &short.errors[..]);
            }
            (_, Err(SimError::NoSuccessfulTrials { .. })) => {}
            (l, s) => prop_assert!(false, "{:?} / {:?}", l.err(), s.err()),
        }
    }
}
