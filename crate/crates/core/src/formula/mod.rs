//! Formula language, model graph and deterministic recalculation.

mod ast;
mod cell;
mod functions;
mod model;
mod parser;

pub use ast::{ArgKind, BinOp, Expr, Function, Range};
pub use cell::{CellRef, CellRefError, MAX_COLUMN};
pub use functions::{
    irr, lookup, npv, npv0, CalcError, CalcErrorKind, CalcFailure, CalcResult, LookupMode,
    IRR_MAX_ITERATIONS,
};
pub use model::{BuildError, BuildErrors, CellDef, CellInput, Evaluation, Model};
pub use parser::{parse_formula, ParseError, ParseErrorKind};
