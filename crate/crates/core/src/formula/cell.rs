use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Highest zero-based column index, `ZZ`.
pub const MAX_COLUMN: u16 = 26 + 26 * 26 - 1;

/// A single-sheet cell address such as `B12`.
///
/// Ordering is row-major: `B1 < A2`. That ordering is what breaks ties in the
/// model's evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRef {
    column: u16,
    row: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cell address `{0}`")]
pub struct CellRefError(pub String);

impl CellRef {
    /// `column` is zero-based (A = 0), `row` is one-based.
    pub fn new(column: u16, row: u32) -> Result<Self, CellRefError> {
        if column > MAX_COLUMN || row == 0 {
            return Err(CellRefError(format!("column {column}, row {row}")));
        }
        Ok(Self { column, row })
    }

    pub fn column(&self) -> u16 {
        self.column
    }

    pub fn row(&self) -> u32 {
        self.row
    }

    /// Parses the leading address in `s` and returns it with the number of
    /// bytes consumed. Used by the lexer; `FromStr` requires the whole string.
    pub(crate) fn parse_prefix(s: &str) -> Option<(Self, usize)> {
        let bytes = s.as_bytes();
        let letters = bytes.iter().take_while(|b| b.is_ascii_uppercase()).count();
        if letters == 0 || letters > 2 {
            return None;
        }
        let digits = bytes[letters..]
            .iter()
            .take_while(|b| b.is_ascii_digit())
            .count();
        if digits == 0 || bytes[letters] == b'0' {
            return None;
        }
        let column = bytes[..letters]
            .iter()
            .fold(0u32, |acc, b| acc * 26 + u32::from(b - b'A') + 1)
            - 1;
        let row: u32 = s[letters..letters + digits].parse().ok()?;
        let cell = Self::new(u16::try_from(column).ok()?, row).ok()?;
        Some((cell, letters + digits))
    }

    fn column_name(&self) -> String {
        let c = self.column as u32;
        if c < 26 {
            char::from(b'A' + c as u8).to_string()
        } else {
            let hi = c / 26 - 1;
            let lo = c % 26;
            format!(
                "{}{}",
                char::from(b'A' + hi as u8),
                char::from(b'A' + lo as u8)
            )
        }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.column_name(), self.row)
    }
}

impl FromStr for CellRef {
    type Err = CellRefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match Self::parse_prefix(s) {
            Some((cell, used)) if used == s.len() => Ok(cell),
            _ => Err(CellRefError(s.to_string())),
        }
    }
}

impl Ord for CellRef {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.row, self.column).cmp(&(other.row, other.column))
    }
}

impl PartialOrd for CellRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for CellRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
