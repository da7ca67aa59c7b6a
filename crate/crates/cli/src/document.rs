//! The JSON model document: a spreadsheet surrogate holding cells, their
//! uncertainty declarations and the audit metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use simaudit::formula::{CellInput, CellRef, Model};
use simaudit::simulator::{
    Assumption, Bounds, Expectation, ExpectedInterval, Forecast, Limit, Sign, SimulationSpec,
};
use simaudit::stochastic::{CorrelationMatrix, Distribution};

use crate::CliError;

/// The document schema shipped with the tool.
pub const SCHEMA: &str = include_str!("../schema/model-document.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub cells: Vec<CellEntry>,
    #[serde(default)]
    pub assumptions: Vec<AssumptionEntry>,
    #[serde(default)]
    pub correlations: Vec<CorrelationEntry>,
    #[serde(default)]
    pub forecasts: Vec<ForecastEntry>,
    #[serde(default)]
    pub limits: Vec<LimitEntry>,
    #[serde(default)]
    pub expectations: Vec<ExpectationEntry>,
    #[serde(default)]
    pub expected_intervals: Vec<IntervalEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunDefaults>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub cell: CellRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub formula: FormulaText,
}

/// A formula string, or a bare number for constant cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormulaText {
    Number(f64),
    Text(String),
}

impl FormulaText {
    fn to_formula(&self) -> String {
        match self {
            FormulaText::Number(v) => v.to_string(),
            FormulaText::Text(s) => s.clone(),
        }
    }
}

/// Cells are named by label or by address everywhere below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionEntry {
    pub cell: String,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationEntry {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastEntry {
    pub cell: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitEntry {
    pub cell: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationEntry {
    pub assumption: String,
    pub forecast: String,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalEntry {
    pub forecast: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_on_error: Option<bool>,
}

/// A built model and the simulation spec the document declares.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub document: ModelDocument,
    pub model: Model,
    pub spec: SimulationSpec,
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Document(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Document(msg) => CliError::Document(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        Model::build(self.cells.iter().map(|c| CellInput {
            cell: c.cell,
            label: c.label.clone(),
            formula: c.formula.to_formula(),
        }))
        .map_err(|e| CliError::Build(e.to_string()))
    }

    /// Resolves every name against the model and collects all problems.
    pub fn build_spec(&self, model: &Model) -> Result<SimulationSpec, CliError> {
        let mut problems = Vec::new();
        let mut resolve = |what: &str, name: &str| -> CellRef {
            model.resolve(name).unwrap_or_else(|| {
                problems.push(format!("{what} names unknown cell '{name}'"));
                CellRef::new(0, 1).expect("A1 is valid")
            })
        };

        let assumptions: Vec<Assumption> = self
            .assumptions
            .iter()
            .map(|a| {
                let cell = resolve("assumption", &a.cell);
                Assumption {
                    cell,
                    label: model.display_name(cell),
                    distribution: a.distribution.clone(),
                }
            })
            .collect();
        let forecasts: Vec<Forecast> = self
            .forecasts
            .iter()
            .map(|f| {
                let cell = resolve("forecast", &f.cell);
                Forecast {
                    cell,
                    label: model.display_name(cell),
                    target: f.target.as_ref().map(|t| Bounds {
                        lo: t.lo.unwrap_or(f64::NEG_INFINITY),
                        hi: t.hi.unwrap_or(f64::INFINITY),
                    }),
                }
            })
            .collect();
        let limits: Vec<Limit> = self
            .limits
            .iter()
            .map(|l| {
                let cell = resolve("limit", &l.cell);
                Limit {
                    cell,
                    label: model.display_name(cell),
                    min: l.min,
                    max: l.max,
                }
            })
            .collect();
        let expectations: Vec<Expectation> = self
            .expectations
            .iter()
            .map(|e| Expectation {
                assumption: resolve("expectation", &e.assumption),
                forecast: resolve("expectation", &e.forecast),
                sign: e.sign,
            })
            .collect();
        let expected_intervals: Vec<ExpectedInterval> = self
            .expected_intervals
            .iter()
            .map(|i| ExpectedInterval {
                forecast: resolve("expected interval", &i.forecast),
                lo: i.lo,
                hi: i.hi,
            })
            .collect();
        let correlation_cells: Vec<(CellRef, CellRef, f64)> = self
            .correlations
            .iter()
            .map(|c| {
                (
                    resolve("correlation", &c.a),
                    resolve("correlation", &c.b),
                    c.rho,
                )
            })
            .collect();

        let index = |c: CellRef| assumptions.iter().position(|a| a.cell == c);
        let mut pairs = Vec::new();
        for (a, b, rho) in correlation_cells {
            match (index(a), index(b)) {
                (Some(i), Some(j)) if i == j => {
                    problems.push(format!("correlation pairs {a} with itself"))
                }
                (Some(i), Some(j)) => {
                    if pairs
                        .iter()
                        .any(|&(x, y, _)| (x, y) == (i, j) || (x, y) == (j, i))
                    {
                        problems.push(format!("correlation between {a} and {b} is declared twice"));
                    }
                    pairs.push((i, j, rho));
                }
                _ => problems.push(format!(
                    "correlation between {a} and {b} must name two assumptions"
                )),
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Document(problems.join("\n")));
        }

        let mut spec = SimulationSpec::new(assumptions, forecasts);
        spec.correlation = CorrelationMatrix::from_pairs(spec.assumptions.len(), &pairs);
        spec.limits = limits;
        spec.expectations = expectations;
        spec.expected_intervals = expected_intervals;
        if let Some(run) = &self.run {
            if let Some(t) = run.trials {
                spec.trials = t;
            }
            if let Some(s) = run.seed {
                spec.seed = s;
            }
            if let Some(s) = run.stop_on_error {
                spec.stop_on_error = s;
            }
        }
        Ok(spec)
    }

    /// Parses, builds and validates; flag overrides are applied before the
    /// spec is checked.
    pub fn load(self, trials: Option<usize>, seed: Option<u64>) -> Result<Loaded, CliError> {
        let model = self.build_model()?;
        let mut spec = self.build_spec(&model)?;
        if let Some(t) = trials {
            spec.trials = t;
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec.validate(&model)
            .map_err(|e| CliError::Document(e.to_string()))?;
        Ok(Loaded {
            document: self,
            model,
            spec,
        })
    }

    /// A copy with the given assumption values written into their cells as
    /// constants. Uncertainty declarations that name assumptions are dropped.
    pub fn with_values(&self, spec: &SimulationSpec, values: &[f64]) -> ModelDocument {
        let mut doc = self.clone();
        for (a, &v) in spec.assumptions.iter().zip(values) {
            if let Some(c) = doc.cells.iter_mut().find(|c| c.cell == a.cell) {
                c.formula = FormulaText::Number(v);
            }
        }
        doc.assumptions.clear();
        doc.correlations.clear();
        doc.expectations.clear();
        doc
    }
}
