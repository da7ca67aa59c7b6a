use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use super::distribution::standard_normal_inverse;
use super::rng::{RandomSource, Stream};

/// Eigenvalues down to this are treated as rounding noise on a PSD matrix.
pub const PSD_TOLERANCE: f64 = -1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Induction wants at least this many rows per correlated column.
pub const MIN_ROWS_PER_COLUMN: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("correlation matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({i}, {j}) = {value} is not in [-1, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("diagonal entry {i} = {value}, expected 1")]
    Diagonal { i: usize, value: f64 },
    #[error("matrix is not symmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("matrix is not positive semi-definite, most negative eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },
}

/// Symmetric matrix of target Spearman coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for i in 0..size {
            entries[i * size + i] = 1.0;
        }
        Self { size, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CorrelationError> {
        let size = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != size) {
            return Err(CorrelationError::NotSquare {
                rows: size,
                cols: r.len(),
            });
        }
        Ok(Self {
            size,
            entries: rows.concat(),
        })
    }

    /// Identity with the given off-diagonal pairs set symmetrically.
    pub fn from_pairs(size: usize, pairs: &[(usize, usize, f64)]) -> Self {
        let mut m = Self::identity(size);
        for &(i, j, rho) in pairs {
            m.entries[i * size + j] = rho;
            m.entries[j * size + i] = rho;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn is_identity(&self) -> bool {
        (0..self.size)
            .all(|i| (0..self.size).all(|j| self.get(i, j) == if i == j { 1.0 } else { 0.0 }))
    }

    /// Indices that have at least one nonzero off-diagonal entry.
    pub fn correlated(&self) -> Vec<usize> {
        (0..self.size)
            .filter(|&i| (0..self.size).any(|j| j != i && self.get(i, j) != 0.0))
            .collect()
    }

    /// Principal submatrix over `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let size = indices.len();
        let entries = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self { size, entries }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.size, self.size, &self.entries);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Accepts iff symmetric, unit diagonal, entries in [-1, 1] and every
    /// eigenvalue at least -1e-10.
    pub fn validate(&self) -> Result<(), CorrelationError> {
        let n = self.size;
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                if !(-1.0..=1.0).contains(&v) {
                    return Err(CorrelationError::OutOfRange { i, j, value: v });
                }
            }
            if self.get(i, i) != 1.0 {
                return Err(CorrelationError::Diagonal {
                    i,
                    value: self.get(i, i),
                });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if (a - b).abs() > SYMMETRY_TOLERANCE {
                    return Err(CorrelationError::Asymmetric { i, j, a, b });
                }
            }
        }
        if n > 0 {
            let min = self.eigenvalues()[0];
            if min < PSD_TOLERANCE {
                return Err(CorrelationError::NotPsd {
                    min_eigenvalue: min,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InductionError {
    #[error("{rows} rows is too few to correlate {columns} columns (need at least {required})")]
    TooFewRows {
        rows: usize,
        columns: usize,
        required: usize,
    },
    #[error("expected {expected} columns, got {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("column {column} has {found} rows, expected {expected}")]
    Ragged {
        column: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Invalid(#[from] CorrelationError),
    #[error("score matrix is singular")]
    DegenerateScores,
}

/// Lower-triangular `L` with `L·Lᵀ = m` for a PSD matrix. Pivots that vanish
/// to rounding leave a zero column, so a perfectly correlated pair produces
/// exactly identical rows.
fn psd_cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    let scale_tol = 1e-12;
    for j in 0..n {
        let d = m[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d < -1e-8 {
            return None;
        }
        if d <= scale_tol {
            continue;
        }
        let root = d.sqrt();
        l[j * n + j] = root;
        for i in j + 1..n {
            let s = m[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / root;
        }
    }
    Some(l)
}

/// Reorders each column so the rank correlations approach `target`, keeping
/// every column's multiset of values unchanged.
///
/// Gaussian scores drawn from `src` are decorrelated exactly (sample
/// Cholesky), recorrelated to the Pearson equivalent of the Spearman target,
/// and each input column is then rearranged to follow the ranks of its score
/// column.
pub fn induce_rank_correlation(
    columns: &[Vec<f64>],
    target: &CorrelationMatrix,
    src: &RandomSource,
) -> Result<Vec<Vec<f64>>, InductionError> {
    target.validate()?;
    let k = target.size();
    if columns.len() != k {
        return Err(InductionError::ColumnCount {
            expected: k,
            found: columns.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let n = columns[0].len();
    if let Some((column, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(InductionError::Ragged {
            column,
            expected: n,
            found: c.len(),
        });
    }
    let required = MIN_ROWS_PER_COLUMN * k;
    if n < required {
        return Err(InductionError::TooFewRows {
            rows: n,
            columns: k,
            required,
        });
    }

    // standardised Gaussian scores, column-major
    let mut scores: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..n)
                .map(|i| {
                    standard_normal_inverse(src.uniform(
                        Stream::CorrelationScores,
                        i as u64,
                        j as u64,
                    ))
                })
                .collect()
        })
        .collect();
    for col in &mut scores {
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd == 0.0 {
            return Err(InductionError::DegenerateScores);
        }
        col.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }

    // W = S·F⁻ᵀ where F·Fᵀ is the sample correlation of S
    let mut sample = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..=a {
            let r = scores[a]
                .iter()
                .zip(&scores[b])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / n as f64;
            sample[a * k + b] = r;
            sample[b * k + a] = r;
        }
    }
    let f = psd_cholesky(&sample, k).ok_or(InductionError::DegenerateScores)?;
    if (0..k).any(|j| f[j * k + j] == 0.0) {
        return Err(InductionError::DegenerateScores);
    }
    let mut white = vec![vec![0.0; n]; k];
    for i in 0..n {
        // forward substitution of F·w = s for row i
        for j in 0..k {
            let s = scores[j][i] - (0..j).map(|m| f[j * k + m] * white[m][i]).sum::<f64>();
            white[j][i] = s / f[j * k + j];
        }
    }

    let pearson: Vec<f64> = (0..k * k)
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            let rho = target.get(i, j);
            if i == j {
                1.0
            } else if rho.abs() == 1.0 {
                // sin(π/6) rounds below 0.5
                rho
            } else {
                2.0 * (std::f64::consts::PI * rho / 6.0).sin()
            }
        })
        .collect();
    // the Spearman-to-Pearson map can nudge a boundary matrix out of the PSD cone
    let l = psd_cholesky(&pearson, k)
        .or_else(|| psd_cholesky(&target.entries, k))
        .ok_or(CorrelationError::NotPsd {
            min_eigenvalue: target.eigenvalues()[0],
        })?;

    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let correlated: Vec<f64> = (0..n)
            .map(|i| (0..=j).map(|m| white[m][i] * l[j * k + m]).sum())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| correlated[a].total_cmp(&correlated[b]).then(a.cmp(&b)));
        let mut sorted = columns[j].clone();
        sorted.sort_by(f64::total_cmp);
        let mut column = vec![0.0; n];
        for (rank, &row) in order.iter().enumerate() {
            column[row] = sorted[rank];
        }
        out.push(column);
    }
    Ok(out)
}
