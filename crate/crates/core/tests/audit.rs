//! Detector behaviour, witness validity, calibration and determinism.

use proptest::prelude::*;
use simaudit::audit::{
    audit, audit_store, backcast, AuditError, FindingKind, History, HistoryRow, Severity,
    Thresholds,
};
use simaudit::formula::{CalcErrorKind, CellInput, CellRef, Model};
use simaudit::simulator::{
    replay, run, Assumption, Expectation, ExpectedInterval, Forecast, Limit, Sign, SimulationSpec,
};
use simaudit::stochastic::{CorrelationMatrix, Distribution};

fn c(s: &str) -> CellRef {
    s.parse().unwrap()
}

fn unit() -> Distribution {
    Distribution::uniform(0.0, 1.0).unwrap()
}

fn assumption(cell: &str, label: &str, d: Distribution) -> Assumption {
    Assumption {
        cell: c(cell),
        label: label.into(),
        distribution: d,
    }
}

fn forecast(cell: &str, label: &str) -> Forecast {
    Forecast {
        cell: c(cell),
        label: label.into(),
        target: None,
    }
}

/// f = a - 0.5·b + 0.3·k; every true |ρ| is at least 0.25. With `hard_code`
/// the formula uses a literal where k belongs.
fn linear(hard_code: bool, seed: u64) -> (Model, SimulationSpec) {
    let f = if hard_code {
        "=A1-0.5*A2+0.3*0.5"
    } else {
        "=A1-0.5*A2+0.3*A3"
    };
    let model = Model::build([
        CellInput::new(c("A1"), "0.5"),
        CellInput::new(c("A2"), "0.5"),
        CellInput::new(c("A3"), "0.5"),
        CellInput::new(c("B1"), f),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![
            assumption("A1", "a", unit()),
            assumption("A2", "b", unit()),
            assumption("A3", "k", unit()),
        ],
        vec![forecast("B1", "f")],
    );
    spec.seed = seed;
    (model, spec)
}

#[test]
fn calibration_suite_twenty_seeds() {
    for seed in 0..20 {
        let (model, spec) = linear(false, seed);
        let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
        assert!(
            report.findings.is_empty(),
            "seed {seed}: {:?}",
            report.findings
        );

        let (model, spec) = linear(true, seed);
        let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
        assert_eq!(
            report.count(FindingKind::Disconnected),
            1,
            "seed {seed}: {:?}",
            report.findings
        );
        let f = &report.findings[0];
        assert_eq!(f.cells, vec![c("A3"), c("B1")]);
        assert_eq!(f.severity, Severity::Error);
    }
}

#[test]
fn two_input_sum_has_no_findings() {
    let model = Model::build([
        CellInput::new(c("A1"), "0"),
        CellInput::new(c("A2"), "0"),
        CellInput::new(c("B1"), "=A1+A2"),
    ])
    .unwrap();
    for seed in 0..20 {
        let mut spec = SimulationSpec::new(
            vec![assumption("A1", "a", unit()), assumption("A2", "b", unit())],
            vec![forecast("B1", "f")],
        );
        spec.seed = seed;
        assert!(audit(&model, &spec, Thresholds::default(), None)
            .unwrap()
            .findings
            .is_empty());
    }
}

#[test]
fn disconnected_witness_replays_to_a_flat_forecast() {
    let (model, spec) = linear(true, 42);
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    let w = report.findings[0].witness.clone().unwrap();
    let medians: Vec<f64> = spec
        .assumptions
        .iter()
        .map(|a| a.distribution.median())
        .collect();
    let at_witness = replay(&model, &spec, &w)
        .unwrap()
        .unwrap()
        .get(c("B1"))
        .unwrap();
    let at_median = replay(&model, &spec, &medians)
        .unwrap()
        .unwrap()
        .get(c("B1"))
        .unwrap();
    assert_ne!(w, medians);
    assert_eq!(at_witness, at_median);
}

#[test]
fn dead_branch_counts_as_disconnected() {
    let model = Model::build([
        CellInput::new(c("A1"), "0.5"),
        CellInput::new(c("A2"), "0.5"),
        CellInput::new(c("B1"), "=IF(A1>2,A2,A1)"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![assumption("A1", "a", unit()), assumption("A2", "b", unit())],
        vec![forecast("B1", "f")],
    );
    // brute force: the forecast never depends on b over the sampled region
    let store = run(&model, &spec).unwrap();
    for r in &store.rows {
        assert_eq!(r.forecasts[0], r.assumptions[0]);
    }
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(report.count(FindingKind::Disconnected), 1);
    assert_eq!(report.findings[0].cells[0], c("A2"));
}

#[test]
fn constant_forecast_flags_every_input() {
    let model = Model::build([
        CellInput::new(c("A1"), "0"),
        CellInput::new(c("B1"), "=A1*0+7"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![assumption("A1", "a", unit())],
        vec![forecast("B1", "f")],
    );
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(report.count(FindingKind::Disconnected), 1);
}

#[test]
fn disconnection_persists_as_trials_grow() {
    let (model, mut spec) = linear(true, 7);
    for n in [200, 500, 1000, 2000, 5000, 10_000] {
        spec.trials = n;
        let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
        assert_eq!(report.count(FindingKind::Disconnected), 1, "n = {n}");
    }
}

#[test]
fn too_few_trials_is_an_error() {
    let (model, mut spec) = linear(false, 1);
    spec.trials = 50;
    assert!(matches!(
        audit(&model, &spec, Thresholds::default(), None),
        Err(AuditError::TooFewTrials {
            required: 100,
            found: 50
        })
    ));
}

fn signs_model(net: &str, rho: f64) -> (Model, SimulationSpec) {
    let model = Model::build([
        CellInput::new(c("A1"), "0.5"),
        CellInput::new(c("A2"), "0.5"),
        CellInput::new(c("B1"), net),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![
            assumption("A1", "growth", unit()),
            assumption("A2", "cost", unit()),
        ],
        vec![forecast("B1", "value")],
    );
    spec.expectations = vec![
        Expectation {
            assumption: c("A1"),
            forecast: c("B1"),
            sign: Sign::Positive,
        },
        Expectation {
            assumption: c("A2"),
            forecast: c("B1"),
            sign: Sign::Negative,
        },
    ];
    if rho != 0.0 {
        spec.correlation = CorrelationMatrix::from_pairs(2, &[(0, 1, rho)]);
    }
    (model, spec)
}

#[test]
fn sign_checks() {
    let (model, spec) = signs_model("=3*A1-A2", 0.0);
    assert!(audit(&model, &spec, Thresholds::default(), None)
        .unwrap()
        .findings
        .is_empty());

    let (model, spec) = signs_model("=3*A1+A2", 0.0);
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(report.count(FindingKind::SignMismatch), 1);
    assert_eq!(report.findings[0].cells, vec![c("A2"), c("B1")]);
    assert_eq!(report.findings[0].evidence["tornado_direction"], 1.0);
    assert!(report.has_errors());

    // correlation 0.8 turns cost's rank correlation positive: masking, not a mismatch
    let (model, spec) = signs_model("=3*A1-A2", 0.8);
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(report.findings.len(), 1, "{:?}", report.findings);
    let f = &report.findings[0];
    assert_eq!(
        (f.kind, f.severity),
        (FindingKind::CorrelationMasking, Severity::Warning)
    );
    assert!(f.evidence["spearman"] > 0.0 && f.evidence["tornado_direction"] < 0.0);
    assert!(!report.has_errors());
}

fn balance_model(clamp: bool) -> (Model, SimulationSpec) {
    let balance = if clamp { "=MAX(0,A1-A2)" } else { "=A1-A2" };
    let model = Model::build([
        CellInput::new(c("A1"), "1"),
        CellInput::new(c("A2"), "0.5"),
        CellInput::new(c("B1"), balance),
        CellInput::new(c("B2"), "=B1*2"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![
            assumption("A1", "cash", Distribution::uniform(1.0, 2.0).unwrap()),
            assumption("A2", "cost", Distribution::uniform(0.0, 3.0).unwrap()),
        ],
        vec![forecast("B2", "value")],
    );
    spec.limits = vec![Limit {
        cell: c("B1"),
        label: "balance".into(),
        min: Some(0.0),
        max: None,
    }];
    (model, spec)
}

#[test]
fn limit_violation_with_replayable_witness() {
    let (model, spec) = balance_model(false);
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(report.count(FindingKind::LimitViolation), 1);
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::LimitViolation)
        .unwrap();
    let v = replay(&model, &spec, f.witness.as_ref().unwrap())
        .unwrap()
        .unwrap()
        .get(c("B1"))
        .unwrap();
    assert!(v < 0.0);
    assert_eq!(v, f.evidence["worst_value"]);

    let (model, spec) = balance_model(true);
    assert_eq!(
        audit(&model, &spec, Thresholds::default(), None)
            .unwrap()
            .count(FindingKind::LimitViolation),
        0
    );

    let (model, mut spec) = balance_model(false);
    spec.limits.clear();
    assert_eq!(
        audit(&model, &spec, Thresholds::default(), None)
            .unwrap()
            .count(FindingKind::LimitViolation),
        0
    );
}

#[test]
fn interval_breach_fraction_matches_a_scan() {
    let model = Model::build([
        CellInput::new(c("A1"), "0"),
        CellInput::new(c("B1"), "=A1*1000"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![assumption(
            "A1",
            "x",
            Distribution::normal(100.0, 80.0).unwrap(),
        )],
        vec![forecast("B1", "value")],
    );
    spec.expected_intervals = vec![ExpectedInterval {
        forecast: c("B1"),
        lo: 0.0,
        hi: 1e6,
    }];
    let store = run(&model, &spec).unwrap();
    let report = audit_store(&model, &spec, &store, Thresholds::default(), None).unwrap();
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::IntervalBreach)
        .unwrap();
    let outside = store
        .rows
        .iter()
        .filter(|r| r.forecasts[0] < 0.0 || r.forecasts[0] > 1e6)
        .count();
    assert_eq!(
        f.evidence["exceedance"],
        outside as f64 / store.completed() as f64
    );
    let w = replay(&model, &spec, f.witness.as_ref().unwrap())
        .unwrap()
        .unwrap()
        .get(c("B1"))
        .unwrap();
    assert!(w < 0.0);

    spec.expected_intervals[0] = ExpectedInterval {
        forecast: c("B1"),
        lo: -1e9,
        hi: 1e9,
    };
    assert_eq!(
        audit_store(&model, &spec, &store, Thresholds::default(), None)
            .unwrap()
            .count(FindingKind::IntervalBreach),
        0
    );

    // degenerate interval on a constant forecast
    let model =
        Model::build([CellInput::new(c("A1"), "0"), CellInput::new(c("B1"), "=4")]).unwrap();
    let mut spec = SimulationSpec::new(
        vec![assumption("A1", "x", unit())],
        vec![forecast("B1", "value")],
    );
    spec.expected_intervals = vec![ExpectedInterval {
        forecast: c("B1"),
        lo: 4.0,
        hi: 4.0,
    }];
    assert_eq!(
        audit(&model, &spec, Thresholds::default(), None)
            .unwrap()
            .count(FindingKind::IntervalBreach),
        0
    );
}

#[test]
fn sqrt_census_rate_is_one_half() {
    let model = Model::build([
        CellInput::new(c("A1"), "0.5"),
        CellInput::new(c("A2"), "=SQRT(A1)"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![assumption(
            "A1",
            "x",
            Distribution::normal(0.0, 1.0).unwrap(),
        )],
        vec![forecast("A2", "root")],
    );
    spec.trials = 10_000;
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::ErrorCensus)
        .unwrap();
    assert!(
        (f.evidence["rate"] - 0.5).abs() < 0.02,
        "{}",
        f.evidence["rate"]
    );
    let e = replay(&model, &spec, f.witness.as_ref().unwrap())
        .unwrap()
        .unwrap_err();
    assert_eq!((e.kind, e.cell), (CalcErrorKind::DomainError, c("A2")));
}

#[test]
fn irr_census_witness_replays_non_convergent() {
    let model = Model::build([
        CellInput::new(c("A1"), "-500"),
        CellInput::new(c("B1"), "300"),
        CellInput::new(c("C1"), "300"),
        CellInput::new(c("D1"), "300"),
        CellInput::new(c("A3"), "=IRR(A1:D1)"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![assumption(
            "A1",
            "outlay",
            Distribution::uniform(-1000.0, 100.0).unwrap(),
        )],
        vec![forecast("A3", "irr")],
    );
    let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::ErrorCensus)
        .unwrap();
    assert!(f.message.contains("NonConvergent"));
    let w = f.witness.as_ref().unwrap();
    assert!(w[0] > 0.0);
    let e = replay(&model, &spec, w).unwrap().unwrap_err();
    assert_eq!((e.kind, e.cell), (CalcErrorKind::NonConvergent, c("A3")));
    let clean =
        Model::build([CellInput::new(c("A1"), "0"), CellInput::new(c("A2"), "=A1")]).unwrap();
    let spec = SimulationSpec::new(
        vec![assumption("A1", "x", unit())],
        vec![forecast("A2", "y")],
    );
    assert_eq!(
        audit(&clean, &spec, Thresholds::default(), None)
            .unwrap()
            .count(FindingKind::ErrorCensus),
        0
    );
}

#[test]
fn reports_are_deterministic() {
    let (model, mut spec) = balance_model(false);
    spec.expected_intervals = vec![ExpectedInterval {
        forecast: c("B2"),
        lo: 0.0,
        hi: 1.0,
    }];
    let a = audit(&model, &spec, Thresholds::default(), None).unwrap();
    let b = audit(&model, &spec, Thresholds::default(), None).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!((a.run.seed, a.run.trials), (spec.seed, spec.trials));
}

fn sales_model() -> (Model, SimulationSpec) {
    // year 1 sales hard-coded; B1 should have been =A1
    let model = Model::build([
        CellInput::new(c("A1"), "1000"),
        CellInput::new(c("A2"), "0.1"),
        CellInput::new(c("B1"), "=1000"),
        CellInput::new(c("B2"), "=B1*(1+A2)"),
    ])
    .unwrap();
    let spec = SimulationSpec::new(
        vec![
            assumption(
                "A1",
                "year1",
                Distribution::triangular(800.0, 1000.0, 1300.0).unwrap(),
            ),
            assumption("A2", "growth", Distribution::uniform(0.0, 0.2).unwrap()),
        ],
        vec![forecast("B2", "year2")],
    );
    (model, spec)
}

#[test]
fn backcast_residuals_against_hand_oracle() {
    let (model, spec) = sales_model();
    // observed year-2 sales follow the true relationship year1·(1+growth)
    let rows = [(1000.0, 0.1), (1200.0, 0.1), (900.0, 0.2)];
    let history = History {
        columns: vec![c("A2"), c("A1")],
        observed: vec![c("B2")],
        rows: rows
            .iter()
            .map(|&(y, g)| HistoryRow {
                values: vec![g, y],
                observed: vec![Some(y * (1.0 + g))],
            })
            .collect(),
    };
    let b = backcast(&model, &spec, &history).unwrap();
    assert!(b.findings.is_empty());
    // residual = (1000 - year1)·(1 + growth)
    let expect = [0.0, -220.0, 120.0];
    for (r, e) in b.residuals.iter().zip(expect) {
        assert!((r.residual - e).abs() < 1e-9, "{} vs {e}", r.residual);
    }
    assert!((b.mean_abs_residual[&c("B2")] - 340.0 / 3.0).abs() < 1e-9);
    // trials exceed rows: resampled draws pick valid rows deterministically
    assert_eq!(b.resampled.len(), spec.trials);
    assert!(b.resampled.iter().all(|&r| r < 3));
    assert_eq!(b, backcast(&model, &spec, &history).unwrap());
}

#[test]
fn backcast_self_consistent_and_failure_rows() {
    let model = Model::build([
        CellInput::new(c("A1"), "1"),
        CellInput::new(c("B1"), "1"),
        CellInput::new(c("C1"), "10"),
        CellInput::new(c("B2"), "2"),
        CellInput::new(c("C2"), "20"),
        CellInput::new(c("B3"), "3"),
        CellInput::new(c("C3"), "30"),
        CellInput::new(c("D1"), "=LOOKUP(A1,B1:C3,0)"),
    ])
    .unwrap();
    let mut spec = SimulationSpec::new(
        vec![assumption(
            "A1",
            "key",
            Distribution::discrete_uniform(1, 3).unwrap(),
        )],
        vec![forecast("D1", "rate")],
    );
    spec.limits = vec![Limit {
        cell: c("D1"),
        label: "rate".into(),
        min: None,
        max: Some(25.0),
    }];
    let ok = History {
        columns: vec![c("A1")],
        observed: vec![c("D1")],
        rows: vec![
            HistoryRow {
                values: vec![1.0],
                observed: vec![Some(10.0)],
            },
            HistoryRow {
                values: vec![2.0],
                observed: vec![Some(20.0)],
            },
        ],
    };
    let b = backcast(&model, &spec, &ok).unwrap();
    assert!(b.findings.is_empty());
    assert!(b.residuals.iter().all(|r| r.residual == 0.0));

    let bad = History {
        columns: vec![c("A1")],
        observed: Vec::new(),
        rows: vec![
            HistoryRow {
                values: vec![2.0],
                observed: Vec::new(),
            },
            HistoryRow {
                values: vec![4.0],
                observed: Vec::new(),
            },
            HistoryRow {
                values: vec![3.0],
                observed: Vec::new(),
            },
        ],
    };
    let b = backcast(&model, &spec, &bad).unwrap();
    assert_eq!(b.findings.len(), 2);
    assert!(b
        .findings
        .iter()
        .all(|f| f.kind == FindingKind::BackcastFailure));
    assert_eq!(b.findings[0].evidence["row"], 1.0);
    assert!(b.findings[0].message.contains("LookupMiss"));
    let e = replay(&model, &spec, b.findings[0].witness.as_ref().unwrap())
        .unwrap()
        .unwrap_err();
    assert_eq!(e.kind, CalcErrorKind::LookupMiss);
    // row 2 breaks the declared maximum
    assert_eq!(b.findings[1].evidence["row"], 2.0);

    let empty = History {
        columns: vec![c("A1")],
        observed: Vec::new(),
        rows: Vec::new(),
    };
    assert!(matches!(
        backcast(&model, &spec, &empty),
        Err(AuditError::EmptyHistory)
    ));
    let wrong = History {
        columns: vec![c("B1")],
        observed: Vec::new(),
        rows: vec![HistoryRow {
            values: vec![1.0],
            observed: Vec::new(),
        }],
    };
    assert!(matches!(
        backcast(&model, &spec, &wrong),
        Err(AuditError::HistoryColumns(_))
    ));

    // folded into the full report
    let report = audit(&model, &spec, Thresholds::default(), Some(&bad)).unwrap();
    assert_eq!(report.count(FindingKind::BackcastFailure), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Every witness replays to the condition its finding names.
    #[test]
    fn witnesses_replay(seed in any::<u64>()) {
        let (model, mut spec) = balance_model(false);
        spec.seed = seed;
        spec.trials = 400;
        spec.expected_intervals = vec![ExpectedInterval { forecast: c("B2"), lo: 0.0, hi: 1.0 }];
        let report = audit(&model, &spec, Thresholds::default(), None).unwrap();
        prop_assert!(report.count(FindingKind::LimitViolation) == 1);
        for f in &report.findings {
            let Some(w) = &f.witness else { continue };
            let eval = replay(&model, &spec, w).unwrap();
            match f.kind {
                FindingKind::LimitViolation => prop_assert!(eval.unwrap().get(c("B1")).unwrap() < 0.0),
                FindingKind::IntervalBreach => {
                    let v = eval.unwrap().get(c("B2")).unwrap();
                    prop_assert!(!(0.0..=1.0).contains(&v));
                }
                FindingKind::ErrorCensus => prop_assert!(eval.is_err()),
                _ => {}
            }
        }
    }
}
