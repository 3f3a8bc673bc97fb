//! Correlation-matrix ingestion, validation, and factorization.
//!
//! Matrices arrive as headerless numeric CSV (one row per line) or as a
//! JSON record `{dim, entries_row_major}`. Validation enforces symmetry,
//! a unit diagonal, entries in [-1, 1], and positive semidefiniteness up
//! to a small tolerance; published matrices rounded to two decimals can
//! carry eigenvalues slightly below zero, which the factorization path
//! absorbs by clipping.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symmetry / diagonal / range tolerance used during validation.
const STRUCTURE_TOL: f64 = 1e-12;
/// Most negative admissible eigenvalue.
const PSD_TOL: f64 = -1e-8;
/// Eigenvalue floor applied when a nearly singular matrix must be factorized.
const CLIP_FLOOR: f64 = 1e-10;

/// Errors raised while loading or validating a correlation matrix.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    /// The source held no rows.
    #[error("matrix source is empty")]
    Empty,
    /// Rows of differing lengths.
    #[error("row {row} has {got} entries, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    /// Row/column counts differ.
    #[error("matrix is not square: {rows} rows x {cols} columns")]
    NotSquare { rows: usize, cols: usize },
    /// A token failed to parse as a number.
    #[error("row {row}, column {col}: cannot parse {token:?} as a number")]
    NonNumeric { row: usize, col: usize, token: String },
    /// Asymmetric beyond tolerance.
    #[error("asymmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    /// A diagonal entry differs from one.
    #[error("diagonal entry {i} is {value}, expected 1")]
    NonUnitDiagonal { i: usize, value: f64 },
    /// An off-diagonal entry outside [-1, 1].
    #[error("entry ({i}, {j}) = {value} lies outside [-1, 1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    /// Minimum eigenvalue below the PSD tolerance.
    #[error("matrix is indefinite: minimum eigenvalue {min_eigenvalue}")]
    Indefinite { min_eigenvalue: f64 },
    /// Interval membership was asked against an empty interval union.
    #[error("interval specification is empty")]
    EmptyIntervalSpec,
    /// An interval with reversed or non-finite endpoints.
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    entries_row_major: Vec<f64>,
}

impl From<CorrelationMatrix> for MatrixJson {
    fn from(m: CorrelationMatrix) -> Self {
        MatrixJson { dim: m.dim, entries_row_major: m.entries }
    }
}

impl TryFrom<MatrixJson> for CorrelationMatrix {
    type Error = MatrixError;

    fn try_from(j: MatrixJson) -> Result<Self, MatrixError> {
        CorrelationMatrix::from_entries(j.dim, j.entries_row_major)
    }
}

/// A validated correlation matrix with cached summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
    min_eigenvalue: f64,
    mean_abs_offdiag: f64,
}

impl CorrelationMatrix {
    /// Validates row-major entries and computes the summary statistics.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Result<Self, MatrixError> {
        if dim == 0 || entries.is_empty() {
            return Err(MatrixError::Empty);
        }
        if entries.len() != dim * dim {
            return Err(MatrixError::NotSquare { rows: entries.len() / dim.max(1), cols: dim });
        }
        for i in 0..dim {
            let d = entries[i * dim + i];
            if (d - 1.0).abs() > STRUCTURE_TOL {
                return Err(MatrixError::NonUnitDiagonal { i, value: d });
            }
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > STRUCTURE_TOL {
                    return Err(MatrixError::Asymmetric { i, j, a, b });
                }
                if a.abs() > 1.0 + STRUCTURE_TOL || !a.is_finite() {
                    return Err(MatrixError::EntryOutOfRange { i, j, value: a });
                }
            }
        }
        let eigenvalues = jacobi_eigenvalues(&entries, dim);
        let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < PSD_TOL {
            return Err(MatrixError::Indefinite { min_eigenvalue });
        }
        let mean_abs_offdiag = if dim > 1 {
            let mut sum = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    if i != j {
                        sum += entries[i * dim + j].abs();
                    }
                }
            }
            sum / (dim * (dim - 1)) as f64
        } else {
            0.0
        };
        Ok(Self { dim, entries, min_eigenvalue, mean_abs_offdiag })
    }

    /// The dim x dim identity.
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries, min_eigenvalue: 1.0, mean_abs_offdiag: 0.0 }
    }

    /// Unit diagonal with constant off-diagonal `rho` (PSD for rho in
    /// [-1/(dim-1), 1]).
    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self, MatrixError> {
        let mut entries = vec![rho; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self::from_entries(dim, entries)
    }

    /// Parses a headerless numeric CSV (one matrix row per line).
    pub fn from_csv_str(text: &str) -> Result<Self, MatrixError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for (col, token) in trimmed.split(',').enumerate() {
                let token = token.trim();
                let value: f64 = token.parse().map_err(|_| MatrixError::NonNumeric {
                    row: line_no,
                    col,
                    token: token.to_string(),
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MatrixError::Empty);
        }
        let dim = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                if rows.iter().all(|r| r.len() == rows[0].len()) {
                    return Err(MatrixError::NotSquare { rows: dim, cols: rows[0].len() });
                }
                return Err(MatrixError::RaggedRow { row: i, got: row.len(), expected: dim });
            }
        }
        Self::from_entries(dim, rows.into_iter().flatten().collect())
    }

    /// Loads and validates a CSV file.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, MatrixError> {
        let text = fs::read_to_string(path).map_err(|e| MatrixError::Io(e.to_string()))?;
        Self::from_csv_str(&text)
    }

    /// Renders the matrix as CSV. `Display` formatting keeps the shortest
    /// representation that round-trips, so serialize-then-load reproduces
    /// the entries bit for bit.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.entries[i * self.dim + j]);
            }
            out.push('\n');
        }
        out
    }

    /// Matrix dimension C.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry (i, j).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Smallest eigenvalue (computed at validation time).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Mean absolute off-diagonal entry.
    pub fn mean_abs_offdiag(&self) -> f64 {
        self.mean_abs_offdiag
    }

    /// Checks whether every off-diagonal entry falls inside the union of
    /// closed intervals, within `tol` (published fixtures are rounded, so
    /// a tolerance near 5e-3 absorbs the rounding).
    pub fn interval_membership(
        &self,
        intervals: &[(f64, f64)],
        tol: f64,
    ) -> Result<Membership, MatrixError> {
        if intervals.is_empty() {
            return Err(MatrixError::EmptyIntervalSpec);
        }
        for &(lo, hi) in intervals {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(MatrixError::InvalidInterval(lo, hi));
            }
        }
        let mut violations = Vec::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                let value = self.entry(i, j);
                let inside = intervals
                    .iter()
                    .any(|&(lo, hi)| value >= lo - tol && value <= hi + tol);
                if !inside {
                    violations.push(IntervalViolation { row: i, col: j, value });
                }
            }
        }
        Ok(Membership { ok: violations.is_empty(), violations })
    }

    /// Lower-triangular factor L with L Lᵀ equal to the matrix.
    ///
    /// Plain Cholesky when it succeeds; otherwise the spectrum is clipped
    /// at a small positive floor and the factorization retried, which
    /// keeps rounded, nearly singular matrices usable for sampling.
    pub fn factorize(&self) -> Result<CholeskyFactor, MatrixError> {
        if self.min_eigenvalue < PSD_TOL {
            return Err(MatrixError::Indefinite { min_eigenvalue: self.min_eigenvalue });
        }
        if let Some(lower) = cholesky(&self.entries, self.dim) {
            return Ok(CholeskyFactor { dim: self.dim, lower });
        }
        let (values, vectors) = jacobi_eigen(&self.entries, self.dim);
        let mut rebuilt = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut sum = 0.0;
                for (k, &lambda) in values.iter().enumerate() {
                    let lam = lambda.max(CLIP_FLOOR);
                    sum += vectors[i * self.dim + k] * lam * vectors[j * self.dim + k];
                }
                rebuilt[i * self.dim + j] = sum;
            }
        }
        cholesky(&rebuilt, self.dim)
            .map(|lower| CholeskyFactor { dim: self.dim, lower })
            .ok_or(MatrixError::Indefinite { min_eigenvalue: self.min_eigenvalue })
    }
}

/// Result of an interval-membership check.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    /// True when no off-diagonal entry violated the interval union.
    pub ok: bool,
    /// Offending entries, in row-major order.
    pub violations: Vec<IntervalViolation>,
}

/// One off-diagonal entry outside the requested interval union.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalViolation {
    /// Row index.
    pub row: usize,
    /// Column index.
    pub col: usize,
    /// Offending value.
    pub value: f64,
}

/// Lower-triangular Cholesky-style factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    /// Factor dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major lower-triangular entries (zeros above the diagonal).
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Entry (i, j) of the factor.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// Writes L·z into `out`; transforms iid standard normals into draws
    /// with this factor's correlation.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (i, slot) in out.iter_mut().enumerate() {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            let mut sum = 0.0;
            for (l, zv) in row.iter().zip(z) {
                sum += l * zv;
            }
            *slot = sum;
        }
    }

    /// Frobenius norm of L·Lᵀ − A.
    pub fn reconstruction_error(&self, matrix: &CorrelationMatrix) -> f64 {
        let dim = self.dim;
        let mut err = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let mut sum = 0.0;
                for k in 0..=i.min(j) {
                    sum += self.lower[i * dim + k] * self.lower[j * dim + k];
                }
                let d = sum - matrix.entry(i, j);
                err += d * d;
            }
        }
        err.sqrt()
    }
}

/// Plain Cholesky; `None` when a pivot is not strictly positive.
fn cholesky(entries: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut lower = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = entries[i * dim + j];
            for k in 0..j {
                sum -= lower[i * dim + k] * lower[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                lower[i * dim + i] = sum.sqrt();
            } else {
                lower[i * dim + j] = sum / lower[j * dim + j];
            }
        }
    }
    Some(lower)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
pub(crate) fn jacobi_eigenvalues(entries: &[f64], dim: usize) -> Vec<f64> {
    jacobi_sweeps(entries.to_vec(), dim, false).0
}

/// Eigenvalues and eigenvectors (columns of the returned row-major matrix).
fn jacobi_eigen(entries: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let (values, vectors) = jacobi_sweeps(entries.to_vec(), dim, true);
    (values, vectors.expect("vectors requested"))
}

fn jacobi_sweeps(mut a: Vec<f64>, dim: usize, want_vectors: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut v = if want_vectors {
        let mut id = vec![0.0; dim * dim];
        for i in 0..dim {
            id[i * dim + i] = 1.0;
        }
        Some(id)
    } else {
        None
    };
    if dim == 1 {
        return (vec![a[0]], v);
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                a[p * dim + p] = app - t * apq;
                a[q * dim + q] = aqq + t * apq;
                a[p * dim + q] = 0.0;
                a[q * dim + p] = 0.0;
                for k in 0..dim {
                    if k != p && k != q {
                        let akp = a[k * dim + p];
                        let akq = a[k * dim + q];
                        a[k * dim + p] = c * akp - s * akq;
                        a[p * dim + k] = a[k * dim + p];
                        a[k * dim + q] = s * akp + c * akq;
                        a[q * dim + k] = a[k * dim + q];
                    }
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..dim {
                        let vkp = v[k * dim + p];
                        let vkq = v[k * dim + q];
                        v[k * dim + p] = c * vkp - s * vkq;
                        v[k * dim + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let values = (0..dim).map(|i| a[i * dim + i]).collect();
    (values, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fixture(path: &str) -> CorrelationMatrix {
        let full = format!(
            "{}/../../data/appendix_c/{}",
            env!("CARGO_MANIFEST_DIR"),
            path
        );
        CorrelationMatrix::from_csv_path(full).unwrap()
    }

    #[test]
    fn identity_statistics() {
        let m = CorrelationMatrix::identity(10);
        assert_eq!(m.mean_abs_offdiag(), 0.0);
        assert_abs_diff_eq!(m.min_eigenvalue(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fixture_statistics_match_derivation() {
        // Frozen from an independent eigensolver run on the shipped CSVs.
        let expected = [
            ("full/sigma_x.csv", 0.062888888889, 0.534562466494),
            ("full/sigma_y.csv", 0.064222222222, 0.581086019102),
            ("pm33_100/sigma_x.csv", 0.577555555556, 0.045040510984),
            ("pm33_100/sigma_y.csv", 0.600666666667, 0.038123622668),
            ("pm33_67/sigma_x.csv", 0.433777777778, 0.352855265438),
            ("pm33_67/sigma_y.csv", 0.455333333333, 0.343060133975),
            ("pm67_100/sigma_x.csv", 0.831333333333, 0.015213918294),
            ("pm67_100/sigma_y.csv", 0.838222222222, 0.007679322006),
            ("pos33_67/sigma_x.csv", 0.448888888889, 0.348679111118),
            ("pos33_67/sigma_y.csv", 0.456666666667, 0.349168027728),
            ("pos67_100/sigma_x.csv", 0.836222222222, 0.014469822690),
            ("pos67_100/sigma_y.csv", 0.839333333333, 0.007750959662),
        ];
        for (path, mean_abs, lambda_min) in expected {
            let m = fixture(path);
            assert_eq!(m.dim(), 10);
            assert_abs_diff_eq!(m.mean_abs_offdiag(), mean_abs, epsilon = 1e-9);
            assert_abs_diff_eq!(m.min_eigenvalue(), lambda_min, epsilon = 1e-9);
        }
    }

    #[test]
    fn fixture_statistics_near_published_summaries() {
        // Published summaries were computed before rounding the entries to
        // two decimals, so agreement is loose but tightly bounded.
        let published = [
            ("full/sigma_x.csv", 0.063, 0.535),
            ("full/sigma_y.csv", 0.065, 0.581),
            ("pm33_100/sigma_x.csv", 0.578, 0.042),
            ("pm33_100/sigma_y.csv", 0.600, 0.035),
            ("pm33_67/sigma_x.csv", 0.434, 0.355),
            ("pm33_67/sigma_y.csv", 0.455, 0.347),
            ("pm67_100/sigma_x.csv", 0.832, 0.012),
            ("pm67_100/sigma_y.csv", 0.839, 0.010),
            ("pos33_67/sigma_x.csv", 0.449, 0.350),
            ("pos33_67/sigma_y.csv", 0.456, 0.352),
            ("pos67_100/sigma_x.csv", 0.836, 0.011),
            ("pos67_100/sigma_y.csv", 0.839, 0.010),
        ];
        for (path, mean_abs, lambda_min) in published {
            let m = fixture(path);
            assert_abs_diff_eq!(m.mean_abs_offdiag(), mean_abs, epsilon = 2e-3);
            assert_abs_diff_eq!(m.min_eigenvalue(), lambda_min, epsilon = 5e-3);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let m = fixture("pm67_100/sigma_y.csv");
        let reloaded = CorrelationMatrix::from_csv_str(&m.to_csv()).unwrap();
        assert_eq!(m.entries(), reloaded.entries());
    }

    #[test]
    fn json_round_trip() {
        let m = fixture("full/sigma_x.csv");
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("entries_row_major"));
        let back: CorrelationMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn validation_rejects_malformed_matrices() {
        // entry out of range
        let r = CorrelationMatrix::from_entries(2, vec![1.0, 1.2, 1.2, 1.0]);
        assert!(matches!(r, Err(MatrixError::EntryOutOfRange { .. })));
        // asymmetric
        let r = CorrelationMatrix::from_entries(2, vec![1.0, 0.2, 0.3, 1.0]);
        assert!(matches!(r, Err(MatrixError::Asymmetric { .. })));
        // non-unit diagonal
        let r = CorrelationMatrix::from_entries(2, vec![2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(r, Err(MatrixError::NonUnitDiagonal { .. })));
        // indefinite: rank-deficient matrix perturbed negative
        let r = CorrelationMatrix::from_entries(
            3,
            vec![1.0, 1.0, 0.999, 1.0, 1.0, 1.0, 0.999, 1.0, 1.0],
        );
        assert!(matches!(r, Err(MatrixError::Indefinite { .. })));
        // non-square csv
        let r = CorrelationMatrix::from_csv_str("1.0,0.0\n0.0,1.0\n0.0,0.0\n");
        assert!(matches!(r, Err(MatrixError::NotSquare { .. })));
        // non-numeric csv
        let r = CorrelationMatrix::from_csv_str("1.0,x\ny,1.0\n");
        assert!(matches!(r, Err(MatrixError::NonNumeric { .. })));
        // empty
        let r = CorrelationMatrix::from_csv_str("\n\n");
        assert!(matches!(r, Err(MatrixError::Empty)));
    }

    #[test]
    fn interval_membership_flags_violations() {
        let id = CorrelationMatrix::identity(4);
        let full = id.interval_membership(&[(-1.0, 1.0)], 0.0).unwrap();
        assert!(full.ok);

        let m = fixture("pos33_67/sigma_x.csv");
        let inside = m.interval_membership(&[(0.33, 0.67)], 5e-3).unwrap();
        assert!(inside.ok, "violations: {:?}", inside.violations);

        let hi = fixture("pm67_100/sigma_x.csv");
        let outside = hi
            .interval_membership(&[(0.33, 0.67)], 5e-3)
            .unwrap();
        assert!(!outside.ok);
        assert!(!outside.violations.is_empty());

        assert!(matches!(
            hi.interval_membership(&[], 0.0),
            Err(MatrixError::EmptyIntervalSpec)
        ));
        assert!(matches!(
            hi.interval_membership(&[(0.5, 0.1)], 0.0),
            Err(MatrixError::InvalidInterval(..))
        ));
    }

    #[test]
    fn factorize_identity_and_closed_form() {
        let id = CorrelationMatrix::identity(3);
        let l = id.factorize().unwrap();
        assert_eq!(l.lower(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

        let m = CorrelationMatrix::equicorrelated(2, 0.6).unwrap();
        let l = m.factorize().unwrap();
        assert_abs_diff_eq!(l.entry(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.entry(1, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(l.entry(1, 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn factorize_all_fixtures_reconstruct() {
        for tag in ["full", "pm33_100", "pm67_100", "pm33_67", "pos33_67", "pos67_100"] {
            for which in ["sigma_x.csv", "sigma_y.csv"] {
                let m = fixture(&format!("{tag}/{which}"));
                let l = m.factorize().unwrap();
                let err = l.reconstruction_error(&m);
                assert!(err <= 1e-8, "{tag}/{which}: reconstruction error {err}");
            }
        }
    }

    #[test]
    fn factorize_clips_nearly_singular() {
        // Exactly singular rank-1 matrix: plain Cholesky fails, the clipped
        // path still produces a usable factor.
        let m = CorrelationMatrix::from_entries(
            2,
            vec![1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let l = m.factorize().unwrap();
        assert!(l.reconstruction_error(&m) <= 1e-4);
    }

    #[test]
    fn jacobi_matches_closed_forms() {
        // 2x2 with rho: eigenvalues 1 +- rho.
        let m = vec![1.0, 0.3, 0.3, 1.0];
        let mut ev = jacobi_eigenvalues(&m, 2);
        ev.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(ev[0], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 1.3, epsilon = 1e-14);
        // Equicorrelated C=5, rho=0.4: eigenvalues {1+4*0.4, 0.6 x4}.
        let m = CorrelationMatrix::equicorrelated(5, 0.4).unwrap();
        let mut ev = jacobi_eigenvalues(m.entries(), 5);
        ev.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(ev[4], 2.6, epsilon = 1e-12);
        for &v in &ev[..4] {
            assert_abs_diff_eq!(v, 0.6, epsilon = 1e-12);
        }
    }
}
