use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cell::CellRef;

/// Closed taxonomy of calculation failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CalcErrorKind {
    DivByZero,
    DomainError,
    LookupMiss,
    NonConvergent,
    RefError,
}

impl CalcErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CalcErrorKind::DivByZero => "DivByZero",
            CalcErrorKind::DomainError => "DomainError",
            CalcErrorKind::LookupMiss => "LookupMiss",
            CalcErrorKind::NonConvergent => "NonConvergent",
            CalcErrorKind::RefError => "RefError",
        }
    }
}

impl fmt::Display for CalcErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure not yet attributed to a cell.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind}: {detail}")]
pub struct CalcFailure {
    pub kind: CalcErrorKind,
    pub detail: String,
}

impl CalcFailure {
    pub fn new(kind: CalcErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn at(self, cell: CellRef) -> CalcError {
        CalcError {
            kind: self.kind,
            cell,
            detail: self.detail,
        }
    }
}

/// A calculation error raised by the formula in `cell`.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at {cell}: {detail}")]
pub struct CalcError {
    pub kind: CalcErrorKind,
    pub cell: CellRef,
    pub detail: String,
}

pub type CalcResult = Result<f64, CalcFailure>;

/// Net present value with the spreadsheet convention: the first flow is
/// discounted one full period.
pub fn npv(rate: f64, cashflows: &[f64]) -> CalcResult {
    if rate.is_nan() || rate <= -1.0 {
        return Err(CalcFailure::new(
            CalcErrorKind::DomainError,
            format!("NPV rate {rate} must be greater than -1"),
        ));
    }
    if cashflows.is_empty() {
        return Err(CalcFailure::new(
            CalcErrorKind::DomainError,
            "NPV needs at least one cash flow",
        ));
    }
    let growth = 1.0 + rate;
    let mut factor = 1.0;
    let mut total = 0.0;
    for cf in cashflows {
        factor *= growth;
        total += cf / factor;
    }
    Ok(total)
}

/// Present value with the first flow at period zero, and its derivative in `rate`.
fn npv0_with_slope(rate: f64, cashflows: &[f64]) -> (f64, f64) {
    let growth = 1.0 + rate;
    let mut value = 0.0;
    let mut slope = 0.0;
    let mut discount = 1.0;
    for (i, cf) in cashflows.iter().enumerate() {
        value += cf * discount;
        // d/dr cf·(1+r)^-i = -i·cf·(1+r)^-(i+1)
        slope -= i as f64 * cf * discount / growth;
        discount /= growth;
    }
    (value, slope)
}

/// Present value with the first flow undiscounted, the quantity IRR zeroes.
pub fn npv0(rate: f64, cashflows: &[f64]) -> f64 {
    npv0_with_slope(rate, cashflows).0
}

pub const IRR_MAX_ITERATIONS: usize = 200;
const IRR_NEWTON_ITERATIONS: usize = 50;
const IRR_SCAN_LOW: f64 = -0.99;
const IRR_SCAN_HIGH: f64 = 10.0;
const IRR_SCAN_POINTS: usize = 400;

/// Internal rate of return by Newton iteration from `guess`, falling back to
/// bisection on a bracket scanned over (-0.99, 10].
///
/// A returned rate always satisfies `|npv0(r)| <= 1e-9 * sum(|cf|)`.
pub fn irr(cashflows: &[f64], guess: f64) -> CalcResult {
    if cashflows.len() < 2 {
        return Err(CalcFailure::new(
            CalcErrorKind::NonConvergent,
            "IRR needs at least two cash flows",
        ));
    }
    let has_pos = cashflows.iter().any(|&c| c > 0.0);
    let has_neg = cashflows.iter().any(|&c| c < 0.0);
    if !(has_pos && has_neg) {
        return Err(CalcFailure::new(
            CalcErrorKind::NonConvergent,
            "IRR cash flows never change sign",
        ));
    }
    let scale: f64 = cashflows.iter().map(|c| c.abs()).sum();
    let tolerance = 1e-9 * scale;
    let converged = |r: f64| r > -1.0 && npv0(r, cashflows).abs() <= tolerance;

    let mut rate = guess;
    let mut used = 0;
    while used < IRR_NEWTON_ITERATIONS && rate > -1.0 && rate.is_finite() {
        used += 1;
        let (value, slope) = npv0_with_slope(rate, cashflows);
        if value.abs() <= tolerance {
            return Ok(polish(rate, cashflows));
        }
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        rate -= value / slope;
    }
    if converged(rate) {
        return Ok(polish(rate, cashflows));
    }

    let Some((mut lo, mut hi)) = scan_bracket(cashflows, guess) else {
        return Err(CalcFailure::new(
            CalcErrorKind::NonConvergent,
            format!("IRR found no root in ({IRR_SCAN_LOW}, {IRR_SCAN_HIGH}] from guess {guess}"),
        ));
    };
    let mut f_lo = npv0(lo, cashflows);
    while used < IRR_MAX_ITERATIONS {
        used += 1;
        let mid = 0.5 * (lo + hi);
        let f_mid = npv0(mid, cashflows);
        if f_mid.abs() <= tolerance {
            return Ok(polish(mid, cashflows));
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(CalcFailure::new(
        CalcErrorKind::NonConvergent,
        format!("IRR did not converge within {IRR_MAX_ITERATIONS} iterations"),
    ))
}

/// A few more Newton steps from an accepted rate, kept only while the
/// residual shrinks, so results sit well inside the tolerance.
fn polish(mut rate: f64, cashflows: &[f64]) -> f64 {
    let (mut value, mut slope) = npv0_with_slope(rate, cashflows);
    for _ in 0..4 {
        if value == 0.0 || slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = rate - value / slope;
        if next.is_nan() || next <= -1.0 {
            break;
        }
        let (v, s) = npv0_with_slope(next, cashflows);
        if v.is_nan() || v.abs() >= value.abs() {
            break;
        }
        (rate, value, slope) = (next, v, s);
    }
    rate
}

/// Finds a sign-changing interval of `npv0`, preferring the one closest to `guess`.
fn scan_bracket(cashflows: &[f64], guess: f64) -> Option<(f64, f64)> {
    // quadratic spacing puts more points near -1 where npv0 moves fastest
    let grid: Vec<f64> = (0..=IRR_SCAN_POINTS)
        .map(|j| {
            let t = j as f64 / IRR_SCAN_POINTS as f64;
            IRR_SCAN_LOW + (IRR_SCAN_HIGH - IRR_SCAN_LOW) * t * t
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&r| npv0(r, cashflows)).collect();
    grid.windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0].is_finite() && v[1].is_finite() && (v[0] < 0.0) != (v[1] < 0.0))
        .map(|(r, _)| (r[0], r[1]))
        .min_by(|a, b| {
            let da = (0.5 * (a.0 + a.1) - guess).abs();
            let db = (0.5 * (b.0 + b.1) - guess).abs();
            da.total_cmp(&db)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupMode {
    Exact,
    /// Largest key less than or equal to the probe; keys must ascend.
    Step,
}

pub fn lookup(table: &[(f64, f64)], key: f64, mode: LookupMode) -> CalcResult {
    let miss = |detail: String| Err(CalcFailure::new(CalcErrorKind::LookupMiss, detail));
    if table.is_empty() {
        return miss("lookup table is empty".into());
    }
    match mode {
        LookupMode::Exact => match table.iter().find(|(k, _)| *k == key) {
            Some((_, v)) => Ok(*v),
            None => miss(format!("key {key} not found")),
        },
        LookupMode::Step => {
            if table.windows(2).any(|w| w[1].0 < w[0].0) {
                return miss("lookup table is not sorted ascending".into());
            }
            match table.iter().rev().find(|(k, _)| *k <= key) {
                Some((_, v)) => Ok(*v),
                None => miss(format!("key {key} is below the first entry {}", table[0].0)),
            }
        }
    }
}
