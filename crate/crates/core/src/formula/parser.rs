//! Recursive-descent parser for the formula language.
//!
//! ```text
//! formula := "=" expr | number
//! expr    := add (("=" | "<>" | "<" | "<=" | ">" | ">=") add)?
//! add     := mul (("+" | "-") mul)*
//! mul     := pow (("*" | "/") pow)*
//! pow     := unary ("^" unary)*
//! unary   := "-" unary | atom
//! atom    := number | cellref | call | "(" expr ")"
//! call    := name "(" args ")"
//! args    := (expr | range) ("," (expr | range))*
//! ```
//!
//! Positions in errors are zero-based character offsets into the input.

use std::fmt;

use thiserror::Error;

use super::ast::{ArgKind, BinOp, Expr, Function, Range};
use super::cell::CellRef;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at position {position}: {kind}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax {
        expected: Vec<&'static str>,
        found: String,
    },
    UnknownFunction(String),
    Arity {
        function: Function,
        found: usize,
    },
    RangeNotAllowed {
        function: Option<Function>,
    },
    RangeRequired {
        function: Function,
        argument: usize,
    },
    /// LOOKUP tables must be exactly two columns wide.
    RangeShape {
        function: Function,
        width: usize,
    },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "expected {}, found {found}", expected.join(" or "))
            }
            ParseErrorKind::UnknownFunction(name) => write!(f, "unknown function `{name}`"),
            ParseErrorKind::Arity { function, found } => {
                let (min, max) = function.arity();
                let want = match max {
                    Some(max) if max == min => format!("{min}"),
                    Some(max) => format!("{min} to {max}"),
                    None => format!("at least {min}"),
                };
                write!(
                    f,
                    "{} takes {want} argument(s), got {found}",
                    function.name()
                )
            }
            ParseErrorKind::RangeNotAllowed {
                function: Some(func),
            } => {
                write!(f, "range not allowed in this argument of {}", func.name())
            }
            ParseErrorKind::RangeNotAllowed { function: None } => {
                write!(f, "range only allowed as a function argument")
            }
            ParseErrorKind::RangeRequired { function, argument } => write!(
                f,
                "argument {} of {} must be a range",
                argument + 1,
                function.name()
            ),
            ParseErrorKind::RangeShape { function, width } => write!(
                f,
                "{} table must be 2 columns wide, got {width}",
                function.name()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Cell(CellRef),
    Name(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Cell(c) => write!(f, "cell {c}"),
            Tok::Name(n) => write!(f, "name `{n}`"),
            Tok::Op(o) => write!(f, "`{o}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn lex(chars: &[char], start: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut toks = Vec::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let pos = i;
        let tok = match c {
            '0'..='9' | '.' => {
                let (v, next) = lex_number(chars, i)?;
                i = next;
                toks.push((Tok::Num(v), pos));
                continue;
            }
            'A'..='Z' | 'a'..='z' | '_' => {
                let end = chars[i..]
                    .iter()
                    .position(|c| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '.'))
                    .map_or(chars.len(), |n| i + n);
                let word: String = chars[i..end].iter().collect();
                i = end;
                let next = chars[i..].iter().find(|c| !c.is_whitespace());
                let tok = match word.parse::<CellRef>() {
                    Ok(cell) if next != Some(&'(') => Tok::Cell(cell),
                    _ => Tok::Name(word),
                };
                toks.push((tok, pos));
                continue;
            }
            '+' => Tok::Op("+"),
            '-' | '\u{2212}' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '^' => Tok::Op("^"),
            '=' => Tok::Op("="),
            '<' => match chars.get(i + 1) {
                Some('=') => {
                    i += 1;
                    Tok::Op("<=")
                }
                Some('>') => {
                    i += 1;
                    Tok::Op("<>")
                }
                _ => Tok::Op("<"),
            },
            '>' => match chars.get(i + 1) {
                Some('=') => {
                    i += 1;
                    Tok::Op(">=")
                }
                _ => Tok::Op(">"),
            },
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            other => {
                return Err(ParseError {
                    position: pos,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["expression"],
                        found: format!("`{other}`"),
                    },
                })
            }
        };
        i += 1;
        toks.push((tok, pos));
    }
    toks.push((Tok::End, chars.len()));
    Ok(toks)
}

fn lex_number(chars: &[char], start: usize) -> Result<(f64, usize), ParseError> {
    let mut i = start;
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - s
    };
    let mut n = digits(&mut i);
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        n += digits(&mut i);
    }
    let err = |position| ParseError {
        position,
        kind: ParseErrorKind::Syntax {
            expected: vec!["number"],
            found: "malformed number".into(),
        },
    };
    if n == 0 {
        return Err(err(start));
    }
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            i = j;
            digits(&mut i);
        }
    }
    let text: String = chars[start..i].iter().collect();
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok((v, i)),
        _ => Err(err(start)),
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Tok::Op(o) if ops.contains(o) => {
                let o = *o;
                self.bump();
                Some(o)
            }
            _ => None,
        }
    }

    fn fail(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            position: self.pos(),
            kind: ParseErrorKind::Syntax {
                expected,
                found: self.peek().to_string(),
            },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add()?;
        let op = match self.eat_op(&["=", "<>", "<", "<=", ">", ">="]) {
            Some("=") => BinOp::Eq,
            Some("<>") => BinOp::Ne,
            Some("<") => BinOp::Lt,
            Some("<=") => BinOp::Le,
            Some(">") => BinOp::Gt,
            Some(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        let rhs = self.add()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul()?;
        while let Some(o) = self.eat_op(&["+", "-"]) {
            let op = if o == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, self.mul()?);
        }
        Ok(lhs)
    }

    fn mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.pow()?;
        while let Some(o) = self.eat_op(&["*", "/"]) {
            let op = if o == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, self.pow()?);
        }
        Ok(lhs)
    }

    fn pow(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat_op(&["^"]).is_some() {
            lhs = Expr::binary(BinOp::Pow, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Number(v))
            }
            Tok::Cell(c) => {
                self.bump();
                if matches!(self.peek(), Tok::Colon) {
                    return Err(ParseError {
                        position: pos,
                        kind: ParseErrorKind::RangeNotAllowed { function: None },
                    });
                }
                Ok(Expr::Ref(c))
            }
            Tok::Name(name) if matches!(self.peek2(), Some(Tok::LParen)) => {
                self.bump();
                self.bump();
                self.call(&name, pos)
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if !matches!(self.peek(), Tok::RParen) {
                    return Err(self.fail(vec!["`)`", "operator"]));
                }
                self.bump();
                Ok(e)
            }
            _ => Err(self.fail(vec!["expression"])),
        }
    }

    fn arg(&mut self) -> Result<(Expr, usize), ParseError> {
        let pos = self.pos();
        if let (Tok::Cell(start), Some(Tok::Colon)) = (self.peek().clone(), self.peek2()) {
            self.bump();
            self.bump();
            return match self.bump() {
                Tok::Cell(end) => Ok((Expr::Range(Range { start, end }), pos)),
                _ => {
                    self.at -= 1;
                    Err(self.fail(vec!["cell reference"]))
                }
            };
        }
        Ok((self.expr()?, pos))
    }

    fn call(&mut self, name: &str, name_pos: usize) -> Result<Expr, ParseError> {
        let func = Function::from_name(name).ok_or_else(|| ParseError {
            position: name_pos,
            kind: ParseErrorKind::UnknownFunction(name.to_string()),
        })?;
        let mut args = Vec::new();
        if !matches!(self.peek(), Tok::RParen) {
            loop {
                args.push(self.arg()?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return Err(self.fail(vec!["`,`", "`)`", "operator"])),
                }
            }
        }
        self.bump();

        let (min, max) = func.arity();
        if args.len() < min || max.is_some_and(|m| args.len() > m) {
            return Err(ParseError {
                position: name_pos,
                kind: ParseErrorKind::Arity {
                    function: func,
                    found: args.len(),
                },
            });
        }
        for (i, (arg, pos)) in args.iter().enumerate() {
            let is_range = matches!(arg, Expr::Range(_));
            let kind = match func.arg_kind(i) {
                ArgKind::Scalar if is_range => ParseErrorKind::RangeNotAllowed {
                    function: Some(func),
                },
                ArgKind::Range if !is_range => ParseErrorKind::RangeRequired {
                    function: func,
                    argument: i,
                },
                _ => continue,
            };
            return Err(ParseError {
                position: *pos,
                kind,
            });
        }
        if func == Function::Lookup {
            if let (Expr::Range(r), pos) = &args[1] {
                if r.width() != 2 {
                    return Err(ParseError {
                        position: *pos,
                        kind: ParseErrorKind::RangeShape {
                            function: func,
                            width: r.width(),
                        },
                    });
                }
            }
        }
        Ok(Expr::Call {
            func,
            args: args.into_iter().map(|(a, _)| a).collect(),
        })
    }
}

/// Parses `=expr` or a bare (optionally signed) numeric literal.
pub fn parse_formula(text: &str) -> Result<Expr, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let first = chars.iter().position(|c| !c.is_whitespace());
    match first.map(|i| (i, chars[i])) {
        Some((i, '=')) => {
            let mut p = Parser {
                toks: lex(&chars, i + 1)?,
                at: 0,
            };
            let e = p.expr()?;
            if !matches!(p.peek(), Tok::End) {
                return Err(p.fail(vec!["operator", "end of input"]));
            }
            Ok(e)
        }
        Some((i, _)) => parse_constant(&chars, i),
        None => Err(ParseError {
            position: 0,
            kind: ParseErrorKind::Syntax {
                expected: vec!["`=`", "number"],
                found: "end of input".into(),
            },
        }),
    }
}

fn parse_constant(chars: &[char], start: usize) -> Result<Expr, ParseError> {
    let fail = |position: usize| ParseError {
        position,
        kind: ParseErrorKind::Syntax {
            expected: vec!["`=`", "number"],
            found: chars
                .get(position)
                .map_or("end of input".into(), |c| format!("`{c}`")),
        },
    };
    let mut i = start;
    let negative = match chars[i] {
        '-' | '\u{2212}' => {
            i += 1;
            true
        }
        '+' => {
            i += 1;
            false
        }
        _ => false,
    };
    if !chars
        .get(i)
        .is_some_and(|c| c.is_ascii_digit() || *c == '.')
    {
        return Err(fail(i));
    }
    let (v, end) = lex_number(chars, i)?;
    if let Some(j) = chars[end..].iter().position(|c| !c.is_whitespace()) {
        return Err(fail(end + j));
    }
    Ok(Expr::Number(if negative { -v } else { v }))
}
