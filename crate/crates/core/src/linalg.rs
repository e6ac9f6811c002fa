//! Complex scalar plumbing and the row-compressed operator type used for
//! expanded N-qubit gates.

use std::fmt::Debug;

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type DenseMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Storage precision of a density matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// 32-bit float components (8 bytes per complex entry).
    Single,
    /// 64-bit float components (16 bytes per complex entry).
    #[default]
    Double,
}

impl Precision {
    /// Bytes per complex matrix entry.
    pub fn component_size(self) -> usize {
        match self {
            Precision::Single => std::mem::size_of::<Complex<f32>>(),
            Precision::Double => std::mem::size_of::<Complex<f64>>(),
        }
    }

    /// Invariant tolerance for trace, Hermiticity and probabilities.
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::Single => 1e-4,
            Precision::Double => 1e-9,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(format!("unknown precision {other:?} (expected single or double)")),
        }
    }
}

/// Float type a density matrix can be stored in.
pub trait Real: num_traits::Float + Default + Send + Sync + Debug + 'static {
    const PRECISION: Precision;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[inline]
pub(crate) fn narrow<T: Real>(z: C64) -> Complex<T> {
    Complex::new(T::from_f64(z.re), T::from_f64(z.im))
}

#[inline]
pub(crate) fn widen<T: Real>(z: Complex<T>) -> C64 {
    C64::new(z.re.to_f64(), z.im.to_f64())
}

/// Largest entrywise modulus of `U U† - I`.
pub fn unitarity_defect(u: &DenseMatrix) -> f64 {
    let prod = u * u.adjoint();
    let n = prod.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let expect = if r == c { ONE } else { ZERO };
            worst = worst.max((prod[(r, c)] - expect).norm());
        }
    }
    worst
}

/// Kronecker product of dense matrices, left factor most significant.
pub fn kron_dense(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.kronecker(b)
}

/// Square complex operator stored row-compressed.
///
/// Expanded gates on N qubits have at most `2^arity` nonzeros per row, so
/// conjugating a `4^N`-entry density matrix by one costs `O(4^N * 2^arity)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Operator {
    pub fn identity(dim: usize) -> Self {
        Operator { dim, row_ptr: (0..=dim).collect(), cols: (0..dim).collect(), vals: vec![ONE; dim] }
    }

    /// Builds from per-row `(col, value)` lists; exact zeros are dropped.
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<(usize, C64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < dim);
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        assert_eq!(row_ptr.len(), dim + 1, "row count must equal dimension");
        let mut op = Operator { dim, row_ptr, cols, vals };
        op.prune();
        op
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        let dim = m.nrows();
        Operator::from_rows(dim, (0..dim).map(|r| (0..dim).map(|c| (c, m[(r, c)])).collect::<Vec<_>>()))
    }

    fn prune(&mut self) {
        if self.vals.iter().all(|v| *v != ZERO) {
            return;
        }
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        row_ptr.push(0);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(col, _)| col == c).map_or(ZERO, |(_, v)| v)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `self ⊗ other`, with `self` on the more significant qubits.
    pub fn kron(&self, other: &Operator) -> Operator {
        let dim = self.dim * other.dim;
        let rows = (0..self.dim).flat_map(|ra| {
            (0..other.dim).map(move |rb| {
                let mut row = Vec::new();
                for (ca, va) in self.row(ra) {
                    for (cb, vb) in other.row(rb) {
                        row.push((ca * other.dim + cb, va * vb));
                    }
                }
                row
            })
        });
        Operator::from_rows(dim, rows)
    }

    pub fn add(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim, "dimension mismatch in operator sum");
        Operator::from_rows(self.dim, (0..self.dim).map(|r| self.row(r).chain(other.row(r)).collect::<Vec<_>>()))
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim, "dimension mismatch in operator product");
        Operator::from_rows(
            self.dim,
            (0..self.dim).map(|r| {
                let mut row = Vec::new();
                for (k, a) in self.row(r) {
                    for (c, b) in other.row(k) {
                        row.push((c, a * b));
                    }
                }
                row
            }),
        )
    }

    pub fn adjoint(&self) -> Operator {
        let mut rows = vec![Vec::new(); self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                rows[c].push((r, v.conj()));
            }
        }
        Operator::from_rows(self.dim, rows)
    }

    /// Largest entrywise modulus of `U U† - I`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.mul(&self.adjoint());
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            let mut saw_diag = false;
            for (c, v) in prod.row(r) {
                let expect = if r == c {
                    saw_diag = true;
                    ONE
                } else {
                    ZERO
                };
                worst = worst.max((v - expect).norm());
            }
            if !saw_diag {
                worst = worst.max(1.0);
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim, other.dim);
        let diff = self.add(&other.scale(-ONE));
        diff.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Operator {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.prune();
        out
    }
}
