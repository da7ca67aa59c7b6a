use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use super::ast::{BinOp, Expr, Function, Range};
use super::cell::CellRef;
use super::functions::{
    irr, lookup, npv, CalcError, CalcErrorKind, CalcFailure, CalcResult, LookupMode,
};
use super::parser::{parse_formula, ParseError};

/// One cell as supplied to [`Model::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellInput {
    pub cell: CellRef,
    pub label: Option<String>,
    pub formula: String,
}

impl CellInput {
    pub fn new(cell: CellRef, formula: impl Into<String>) -> Self {
        Self {
            cell,
            label: None,
            formula: formula.into(),
        }
    }

    pub fn labeled(cell: CellRef, label: impl Into<String>, formula: impl Into<String>) -> Self {
        Self {
            cell,
            label: Some(label.into()),
            formula: formula.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("{cell}: parse error {source}")]
    Parse { cell: CellRef, source: ParseError },
    #[error("{cell}: defined more than once")]
    DuplicateCell { cell: CellRef },
    #[error("label `{label}` used by both {first} and {second}")]
    DuplicateLabel {
        label: String,
        first: CellRef,
        second: CellRef,
    },
    #[error("{cell}: label `{label}` looks like a cell address")]
    AmbiguousLabel { cell: CellRef, label: String },
    #[error("{cell}: RefError, reference to undefined cell {referenced}")]
    UndefinedRef { cell: CellRef, referenced: CellRef },
    #[error("circular reference: {}", display_path(.path))]
    Cycle { path: Vec<CellRef> },
}

fn display_path(path: &[CellRef]) -> String {
    path.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("→")
}

/// Every problem found while building, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct BuildErrors(pub Vec<BuildError>);

impl fmt::Display for BuildErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct RangeSlots {
    width: usize,
    slots: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Cell(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Function, Vec<Arg>),
}

#[derive(Debug, Clone)]
enum Arg {
    Scalar(Node),
    Range(RangeSlots),
}

#[derive(Debug, Clone)]
pub struct CellDef {
    pub cell: CellRef,
    pub label: Option<String>,
    pub expr: Expr,
    /// Direct precedents, in first-reference order.
    pub precedents: Vec<CellRef>,
    node: Node,
}

/// An immutable, acyclic set of cells with a fixed evaluation order.
#[derive(Debug, Clone)]
pub struct Model {
    /// Sorted row-major.
    cells: Vec<CellDef>,
    index: HashMap<CellRef, usize>,
    labels: HashMap<String, usize>,
    order: Vec<usize>,
}

/// Cell values produced by one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation<'m> {
    model: &'m Model,
    values: Vec<f64>,
}

impl<'m> Evaluation<'m> {
    pub fn get(&self, cell: CellRef) -> Option<f64> {
        self.model.index.get(&cell).map(|&i| self.values[i])
    }

    pub fn to_map(&self) -> BTreeMap<CellRef, f64> {
        self.model
            .cells
            .iter()
            .zip(&self.values)
            .map(|(d, v)| (d.cell, *v))
            .collect()
    }

    /// Values aligned with [`Model::cells`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Model {
    pub fn build(inputs: impl IntoIterator<Item = CellInput>) -> Result<Model, BuildErrors> {
        let mut errors = Vec::new();
        let mut parsed: BTreeMap<CellRef, (Option<String>, Expr)> = BTreeMap::new();
        for input in inputs {
            if parsed.contains_key(&input.cell) {
                errors.push(BuildError::DuplicateCell { cell: input.cell });
                continue;
            }
            match parse_formula(&input.formula) {
                Ok(expr) => {
                    parsed.insert(input.cell, (input.label, expr));
                }
                Err(source) => errors.push(BuildError::Parse {
                    cell: input.cell,
                    source,
                }),
            }
        }

        let index: HashMap<CellRef, usize> =
            parsed.keys().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut labels = HashMap::new();
        for (cell, (label, _)) in &parsed {
            let Some(label) = label else { continue };
            if label.parse::<CellRef>().is_ok() {
                errors.push(BuildError::AmbiguousLabel {
                    cell: *cell,
                    label: label.clone(),
                });
            }
            if let Some(&first) = labels.get(label) {
                let first = *parsed.keys().nth(first).expect("indexed cell");
                errors.push(BuildError::DuplicateLabel {
                    label: label.clone(),
                    first,
                    second: *cell,
                });
            } else {
                labels.insert(label.clone(), index[cell]);
            }
        }

        let mut cells = Vec::with_capacity(parsed.len());
        for (cell, (label, expr)) in parsed {
            let precedents = expr.references();
            for r in &precedents {
                if !index.contains_key(r) {
                    errors.push(BuildError::UndefinedRef {
                        cell,
                        referenced: *r,
                    });
                }
            }
            let node = compile(&expr, &index).unwrap_or(Node::Num(f64::NAN));
            cells.push(CellDef {
                cell,
                label,
                expr,
                precedents,
                node,
            });
        }
        if !errors.is_empty() {
            return Err(BuildErrors(errors));
        }

        let order = topological_order(&cells, &index)
            .map_err(|path| BuildErrors(vec![BuildError::Cycle { path }]))?;
        Ok(Model {
            cells,
            index,
            labels,
            order,
        })
    }

    pub fn cells(&self) -> &[CellDef] {
        &self.cells
    }

    pub fn cell(&self, cell: CellRef) -> Option<&CellDef> {
        self.index.get(&cell).map(|&i| &self.cells[i])
    }

    pub fn contains(&self, cell: CellRef) -> bool {
        self.index.contains_key(&cell)
    }

    pub(crate) fn slot(&self, cell: CellRef) -> Option<usize> {
        self.index.get(&cell).copied()
    }

    /// Resolves a label or an address.
    pub fn resolve(&self, name: &str) -> Option<CellRef> {
        if let Some(&i) = self.labels.get(name) {
            return Some(self.cells[i].cell);
        }
        name.parse::<CellRef>().ok().filter(|c| self.contains(*c))
    }

    /// Label if one was given, the address otherwise.
    pub fn display_name(&self, cell: CellRef) -> String {
        self.cell(cell)
            .and_then(|d| d.label.clone())
            .unwrap_or_else(|| cell.to_string())
    }

    /// Evaluation order; ties between independent cells go to the row-major smaller address.
    pub fn order(&self) -> Vec<CellRef> {
        self.order.iter().map(|&i| self.cells[i].cell).collect()
    }

    /// Recomputes the model. Overridden cells take the override verbatim and
    /// their formula is skipped; evaluation stops at the first failing cell in
    /// evaluation order.
    pub fn evaluate(
        &self,
        overrides: &BTreeMap<CellRef, f64>,
    ) -> Result<Evaluation<'_>, CalcError> {
        let slots = self.override_slots(overrides.iter().map(|(c, v)| (*c, *v)))?;
        self.evaluate_slots(&self.order, &slots)
    }

    /// Like [`Model::evaluate`] but with a caller-chosen order, which must be
    /// topologically valid.
    pub fn evaluate_in_order(
        &self,
        order: &[CellRef],
        overrides: &BTreeMap<CellRef, f64>,
    ) -> Result<Evaluation<'_>, CalcError> {
        let mut position = vec![usize::MAX; self.cells.len()];
        let mut slots_order = Vec::with_capacity(order.len());
        for (p, c) in order.iter().enumerate() {
            let i = self.index.get(c).copied().ok_or_else(|| {
                CalcFailure::new(CalcErrorKind::RefError, "cell is not part of the model").at(*c)
            })?;
            position[i] = p;
            slots_order.push(i);
        }
        for (i, def) in self.cells.iter().enumerate() {
            let valid = position[i] != usize::MAX
                && def
                    .precedents
                    .iter()
                    .all(|p| position[self.index[p]] < position[i]);
            if !valid {
                return Err(CalcFailure::new(
                    CalcErrorKind::RefError,
                    "supplied order is not a topological order of the model",
                )
                .at(def.cell));
            }
        }
        let slots = self.override_slots(overrides.iter().map(|(c, v)| (*c, *v)))?;
        self.evaluate_slots(&slots_order, &slots)
    }

    pub(crate) fn override_slots(
        &self,
        overrides: impl Iterator<Item = (CellRef, f64)>,
    ) -> Result<Vec<Option<f64>>, CalcError> {
        let mut slots = vec![None; self.cells.len()];
        for (cell, v) in overrides {
            let i = self.index.get(&cell).ok_or_else(|| {
                CalcFailure::new(
                    CalcErrorKind::RefError,
                    "override targets a cell outside the model",
                )
                .at(cell)
            })?;
            slots[*i] = Some(v);
        }
        Ok(slots)
    }

    pub(crate) fn evaluate_overrides(
        &self,
        overrides: &[Option<f64>],
    ) -> Result<Evaluation<'_>, CalcError> {
        self.evaluate_slots(&self.order, overrides)
    }

    /// Evaluates in order until the first failure, returning every value
    /// computed before it.
    pub(crate) fn evaluate_partial(
        &self,
        overrides: &[Option<f64>],
    ) -> (Vec<Option<f64>>, Option<CalcError>) {
        let mut values = vec![f64::NAN; self.cells.len()];
        let mut done = vec![None; self.cells.len()];
        for &i in &self.order {
            let v = match overrides[i] {
                Some(v) => v,
                None => match eval(&self.cells[i].node, &values) {
                    Ok(v) => v,
                    Err(e) => return (done, Some(e.at(self.cells[i].cell))),
                },
            };
            values[i] = v;
            done[i] = Some(v);
        }
        (done, None)
    }

    fn evaluate_slots(
        &self,
        order: &[usize],
        overrides: &[Option<f64>],
    ) -> Result<Evaluation<'_>, CalcError> {
        let mut values = vec![f64::NAN; self.cells.len()];
        for &i in order {
            values[i] = match overrides[i] {
                Some(v) => v,
                None => eval(&self.cells[i].node, &values).map_err(|e| e.at(self.cells[i].cell))?,
            };
        }
        Ok(Evaluation {
            model: self,
            values,
        })
    }
}

fn compile(expr: &Expr, index: &HashMap<CellRef, usize>) -> Option<Node> {
    Some(match expr {
        Expr::Number(v) => Node::Num(*v),
        Expr::Ref(c) => Node::Cell(*index.get(c)?),
        Expr::Range(_) => return None,
        Expr::Neg(e) => Node::Neg(Box::new(compile(e, index)?)),
        Expr::Binary { op, lhs, rhs } => Node::Bin(
            *op,
            Box::new(compile(lhs, index)?),
            Box::new(compile(rhs, index)?),
        ),
        Expr::Call { func, args } => Node::Call(
            *func,
            args.iter()
                .map(|a| match a {
                    Expr::Range(r) => compile_range(r, index).map(Arg::Range),
                    other => compile(other, index).map(Arg::Scalar),
                })
                .collect::<Option<Vec<_>>>()?,
        ),
    })
}

fn compile_range(range: &Range, index: &HashMap<CellRef, usize>) -> Option<RangeSlots> {
    Some(RangeSlots {
        width: range.width(),
        slots: range
            .cells()
            .map(|c| index.get(&c).copied())
            .collect::<Option<Vec<_>>>()?,
    })
}

/// Kahn's algorithm with a min-heap of ready cells for a stable order. On a
/// cycle, returns one complete cycle path (first cell repeated at the end).
fn topological_order(
    cells: &[CellDef],
    index: &HashMap<CellRef, usize>,
) -> Result<Vec<usize>, Vec<CellRef>> {
    let n = cells.len();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, def) in cells.iter().enumerate() {
        for p in &def.precedents {
            let j = index[p];
            indegree[i] += 1;
            dependents[j].push(i);
        }
    }
    // cells are sorted row-major, so the smallest index is the smallest address
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(find_cycle(cells, index, &indegree))
}

fn find_cycle(
    cells: &[CellDef],
    index: &HashMap<CellRef, usize>,
    indegree: &[usize],
) -> Vec<CellRef> {
    // Every unfinished cell has an unfinished precedent, so walking precedents
    // from any of them must revisit a cell.
    let start = (0..cells.len())
        .find(|&i| indegree[i] > 0)
        .expect("a cell left unordered");
    let mut seen = vec![usize::MAX; cells.len()];
    let mut path = Vec::new();
    let mut at = start;
    while seen[at] == usize::MAX {
        seen[at] = path.len();
        path.push(at);
        at = cells[at]
            .precedents
            .iter()
            .map(|p| index[p])
            .find(|&j| indegree[j] > 0)
            .expect("an unfinished cell has an unfinished precedent");
    }
    // the walk follows precedents; reverse it so the path reads in dependency direction
    let mut cycle: Vec<CellRef> = path[seen[at]..].iter().map(|&i| cells[i].cell).collect();
    cycle.reverse();
    let first = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, c)| **c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cycle.rotate_left(first);
    cycle.push(cycle[0]);
    cycle
}

fn domain(detail: impl Into<String>) -> CalcFailure {
    CalcFailure::new(CalcErrorKind::DomainError, detail)
}

fn finite(v: f64, what: &str) -> CalcResult {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(format!("{what} is not a finite number")))
    }
}

fn eval(node: &Node, values: &[f64]) -> CalcResult {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Cell(i) => Ok(values[*i]),
        Node::Neg(e) => Ok(-eval(e, values)?),
        Node::Bin(op, lhs, rhs) => {
            let a = eval(lhs, values)?;
            let b = eval(rhs, values)?;
            binary(*op, a, b)
        }
        Node::Call(func, args) => call(*func, args, values),
    }
}

fn binary(op: BinOp, a: f64, b: f64) -> CalcResult {
    let truth = |t: bool| Ok(if t { 1.0 } else { 0.0 });
    match op {
        BinOp::Add => finite(a + b, "sum"),
        BinOp::Sub => finite(a - b, "difference"),
        BinOp::Mul => finite(a * b, "product"),
        BinOp::Div => {
            if b == 0.0 {
                Err(CalcFailure::new(
                    CalcErrorKind::DivByZero,
                    format!("division of {a} by zero"),
                ))
            } else {
                finite(a / b, "quotient")
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                return Err(domain(format!("0 raised to negative power {b}")));
            }
            let v = a.powf(b);
            if v.is_nan() {
                return Err(domain(format!("{a} raised to non-integer power {b}")));
            }
            finite(v, "power")
        }
        BinOp::Eq => truth(a == b),
        BinOp::Ne => truth(a != b),
        BinOp::Lt => truth(a < b),
        BinOp::Le => truth(a <= b),
        BinOp::Gt => truth(a > b),
        BinOp::Ge => truth(a >= b),
    }
}

fn scalar(arg: &Arg, values: &[f64]) -> CalcResult {
    match arg {
        Arg::Scalar(n) => eval(n, values),
        Arg::Range(_) => unreachable!("parser rejects ranges in scalar positions"),
    }
}

fn flatten(args: &[Arg], values: &[f64]) -> Result<Vec<f64>, CalcFailure> {
    let mut out = Vec::new();
    for a in args {
        match a {
            Arg::Scalar(n) => out.push(eval(n, values)?),
            Arg::Range(r) => out.extend(r.slots.iter().map(|&i| values[i])),
        }
    }
    Ok(out)
}

fn call(func: Function, args: &[Arg], values: &[f64]) -> CalcResult {
    match func {
        Function::If => {
            // only the taken branch is evaluated
            if scalar(&args[0], values)? != 0.0 {
                scalar(&args[1], values)
            } else {
                scalar(&args[2], values)
            }
        }
        Function::Sum => finite(flatten(args, values)?.iter().sum(), "SUM"),
        Function::Average => {
            let xs = flatten(args, values)?;
            finite(xs.iter().sum::<f64>() / xs.len() as f64, "AVERAGE")
        }
        Function::Min => Ok(flatten(args, values)?
            .into_iter()
            .fold(f64::INFINITY, f64::min)),
        Function::Max => Ok(flatten(args, values)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)),
        Function::Abs => Ok(scalar(&args[0], values)?.abs()),
        Function::Sqrt => {
            let x = scalar(&args[0], values)?;
            if x < 0.0 {
                Err(domain(format!("square root of negative number {x}")))
            } else {
                Ok(x.sqrt())
            }
        }
        Function::Ln => {
            let x = scalar(&args[0], values)?;
            if x <= 0.0 {
                Err(domain(format!("logarithm of non-positive number {x}")))
            } else {
                Ok(x.ln())
            }
        }
        Function::Exp => finite(scalar(&args[0], values)?.exp(), "EXP"),
        Function::Npv => {
            let rate = scalar(&args[0], values)?;
            let flows = flatten(&args[1..], values)?;
            finite(npv(rate, &flows)?, "NPV")
        }
        Function::Irr => {
            let flows = flatten(&args[..1], values)?;
            let guess = match args.get(1) {
                Some(g) => scalar(g, values)?,
                None => 0.1,
            };
            irr(&flows, guess)
        }
        Function::Lookup => {
            let key = scalar(&args[0], values)?;
            let Arg::Range(table) = &args[1] else {
                unreachable!("parser requires a range for the LOOKUP table")
            };
            let m = scalar(&args[2], values)?;
            let mode = if m == 0.0 {
                LookupMode::Exact
            } else if m == 1.0 {
                LookupMode::Step
            } else {
                return Err(domain(format!("LOOKUP mode must be 0 or 1, got {m}")));
            };
            debug_assert_eq!(table.width, 2);
            let rows: Vec<(f64, f64)> = table
                .slots
                .chunks(table.width)
                .map(|row| (values[row[0]], values[row[1]]))
                .collect();
            lookup(&rows, key, mode)
        }
    }
}
