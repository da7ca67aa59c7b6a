use std::fmt;

use super::cell::CellRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div => 3,
            BinOp::Pow => 4,
        }
    }
}

/// Where a function accepts a rectangular range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Scalar,
    /// Scalar or range; ranges are flattened row-major.
    Any,
    Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    If,
    Sum,
    Average,
    Min,
    Max,
    Abs,
    Sqrt,
    Ln,
    Exp,
    Npv,
    Irr,
    Lookup,
}

impl Function {
    pub const ALL: [Function; 12] = [
        Function::If,
        Function::Sum,
        Function::Average,
        Function::Min,
        Function::Max,
        Function::Abs,
        Function::Sqrt,
        Function::Ln,
        Function::Exp,
        Function::Npv,
        Function::Irr,
        Function::Lookup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::If => "IF",
            Function::Sum => "SUM",
            Function::Average => "AVERAGE",
            Function::Min => "MIN",
            Function::Max => "MAX",
            Function::Abs => "ABS",
            Function::Sqrt => "SQRT",
            Function::Ln => "LN",
            Function::Exp => "EXP",
            Function::Npv => "NPV",
            Function::Irr => "IRR",
            Function::Lookup => "LOOKUP",
        }
    }

    /// Case-insensitive lookup.
    pub fn from_name(name: &str) -> Option<Function> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }

    /// Inclusive argument-count bounds; `None` means unbounded.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            Function::If | Function::Lookup => (3, Some(3)),
            Function::Sum | Function::Average | Function::Min | Function::Max => (1, None),
            Function::Abs | Function::Sqrt | Function::Ln | Function::Exp => (1, Some(1)),
            Function::Npv => (2, None),
            Function::Irr => (1, Some(2)),
        }
    }

    pub fn arg_kind(self, index: usize) -> ArgKind {
        match (self, index) {
            (Function::Sum | Function::Average | Function::Min | Function::Max, _) => ArgKind::Any,
            (Function::Npv, 0) => ArgKind::Scalar,
            (Function::Npv, _) => ArgKind::Any,
            (Function::Irr, 0) => ArgKind::Range,
            (Function::Lookup, 1) => ArgKind::Range,
            _ => ArgKind::Scalar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Range {
    pub start: CellRef,
    pub end: CellRef,
}

impl Range {
    /// Normalised corners so that iteration works whichever corner was typed first.
    pub fn bounds(&self) -> (u16, u32, u16, u32) {
        let (c0, c1) = min_max(self.start.column(), self.end.column());
        let (r0, r1) = min_max(self.start.row(), self.end.row());
        (c0, r0, c1, r1)
    }

    pub fn width(&self) -> usize {
        let (c0, _, c1, _) = self.bounds();
        usize::from(c1 - c0) + 1
    }

    pub fn height(&self) -> usize {
        let (_, r0, _, r1) = self.bounds();
        (r1 - r0) as usize + 1
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellRef> {
        let (c0, r0, c1, r1) = self.bounds();
        (r0..=r1).flat_map(move |r| {
            (c0..=c1).map(move |c| CellRef::new(c, r).expect("range corners are valid cells"))
        })
    }
}

fn min_max<T: Ord>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Parsed formula. `Range` only ever appears directly inside `Call` arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Ref(CellRef),
    Range(Range),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Function,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Every cell this expression reads, ranges expanded, in first-seen order.
    pub fn references(&self) -> Vec<CellRef> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        let mut seen = std::collections::HashSet::new();
        out.retain(|c| seen.insert(*c));
        out
    }

    fn collect_refs(&self, out: &mut Vec<CellRef>) {
        match self {
            Expr::Number(_) => {}
            Expr::Ref(c) => out.push(*c),
            Expr::Range(r) => out.extend(r.cells()),
            Expr::Neg(e) => e.collect_refs(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_refs(out);
                rhs.collect_refs(out);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_refs(out)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 5,
            _ => 6,
        }
    }

    /// Formula text including the leading `=`.
    pub fn to_formula(&self) -> String {
        format!("={self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v:?}"),
            Expr::Ref(c) => write!(f, "{c}"),
            Expr::Range(r) => write!(f, "{r}"),
            Expr::Neg(inner) => {
                if inner.precedence() < 5 {
                    write!(f, "-({inner})")
                } else {
                    write!(f, "-{inner}")
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                // comparisons do not chain, so both sides of one need parens
                let lhs_parens = lhs.precedence() < p || (p == 1 && lhs.precedence() == 1);
                let rhs_parens = rhs.precedence() <= p;
                paren(f, lhs, lhs_parens)?;
                write!(f, "{}", op.symbol())?;
                paren(f, rhs, rhs_parens)
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}
