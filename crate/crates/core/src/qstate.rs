//! Multi-qubit systems stored as density matrices.
//!
//! Basis ordering: qubit 0 is the most significant bit, so the basis index of
//! `|q0 q1 ... q(N-1)>` is the binary number `q0 q1 ... q(N-1)`. Every module
//! in the crate uses this convention.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{narrow, unitarity_defect, widen, DenseMatrix, Operator, Precision, Real, C64};

/// Largest system size accepted by [`DensityState::new`].
pub const DEFAULT_MAX_QUBITS: usize = 12;

/// Both branch probabilities below this mean the state is corrupt.
pub const CORRUPT_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub bit: u8,
    /// Probability of the sampled branch before collapse.
    pub probability: f64,
}

/// Read-only borrowed matrix entries, row-major.
#[derive(Clone, Copy, Debug)]
pub enum Entries<'a> {
    Single(&'a [Complex<f32>]),
    Double(&'a [Complex<f64>]),
}

/// Mutable borrowed matrix entries, row-major.
#[derive(Debug)]
pub enum EntriesMut<'a> {
    Single(&'a mut [Complex<f32>]),
    Double(&'a mut [Complex<f64>]),
}

macro_rules! each {
    ($entries:expr, $buf:ident => $body:expr) => {
        match $entries {
            Entries::Single($buf) => $body,
            Entries::Double($buf) => $body,
        }
    };
}

macro_rules! each_mut {
    ($entries:expr, $buf:ident => $body:expr) => {
        match $entries {
            EntriesMut::Single($buf) => $body,
            EntriesMut::Double($buf) => $body,
        }
    };
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Single(Vec<Complex<f32>>),
    Double(Vec<Complex<f64>>),
}

/// An owned N-qubit density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    n_qubits: usize,
    storage: Storage,
}

pub(crate) fn check_size(n_qubits: usize, limit: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > limit {
        return Err(Error::Size { requested: n_qubits, limit });
    }
    Ok(())
}

impl DensityState {
    /// `|0…0><0…0|` on `n_qubits` qubits.
    pub fn new(n_qubits: usize, precision: Precision) -> Result<Self> {
        Self::with_limit(n_qubits, precision, DEFAULT_MAX_QUBITS)
    }

    pub fn with_limit(n_qubits: usize, precision: Precision, limit: usize) -> Result<Self> {
        check_size(n_qubits, limit)?;
        let len = 1usize << (2 * n_qubits);
        let storage = match precision {
            Precision::Single => {
                let mut v = vec![Complex::<f32>::default(); len];
                v[0] = Complex::new(1.0, 0.0);
                Storage::Single(v)
            }
            Precision::Double => {
                let mut v = vec![Complex::<f64>::default(); len];
                v[0] = Complex::new(1.0, 0.0);
                Storage::Double(v)
            }
        };
        Ok(DensityState { n_qubits, storage })
    }

    /// Builds a state from an explicit matrix; the matrix is not validated.
    pub fn from_dense(m: &DenseMatrix, precision: Precision) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::shape("square 2^N matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        let mut state = Self::with_limit(n_qubits, precision, usize::BITS as usize / 2)?;
        let mut view = state.as_mut();
        view.store_dense(m);
        Ok(state)
    }

    /// `|ψ><ψ|` for a (not necessarily normalised) amplitude vector.
    pub fn from_pure(amplitudes: &[C64], precision: Precision) -> Result<Self> {
        let dim = amplitudes.len();
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::Numerical("zero state vector".into()));
        }
        let m = DenseMatrix::from_fn(dim, dim, |r, c| amplitudes[r] * amplitudes[c].conj() / norm);
        Self::from_dense(&m, precision)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn precision(&self) -> Precision {
        match self.storage {
            Storage::Single(_) => Precision::Single,
            Storage::Double(_) => Precision::Double,
        }
    }

    pub fn as_ref(&self) -> StateRef<'_> {
        let entries = match &self.storage {
            Storage::Single(v) => Entries::Single(v),
            Storage::Double(v) => Entries::Double(v),
        };
        StateRef { n_qubits: self.n_qubits, entries }
    }

    pub fn as_mut(&mut self) -> StateMut<'_> {
        let entries = match &mut self.storage {
            Storage::Single(v) => EntriesMut::Single(v),
            Storage::Double(v) => EntriesMut::Double(v),
        };
        StateMut { n_qubits: self.n_qubits, entries }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Bytes occupied by the matrix entries alone.
    pub fn payload_bytes(&self) -> usize {
        self.as_ref().payload_bytes()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.as_ref().get(row, col)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.as_ref().to_dense()
    }

    pub fn trace(&self) -> C64 {
        self.as_ref().trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.as_ref().hermiticity_defect()
    }

    pub fn probability_of_one(&self, qubit: usize) -> Result<f64> {
        self.as_ref().probability_of_one(qubit)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityState> {
        self.as_ref().partial_trace(keep)
    }

    pub fn apply_unitary(&mut self, u: &DenseMatrix) -> Result<()> {
        self.as_mut().apply_unitary(u)
    }

    pub fn apply_unitary_checked(&mut self, u: &DenseMatrix, tol: f64) -> Result<()> {
        self.as_mut().apply_unitary_checked(u, tol)
    }

    pub fn apply_operator(&mut self, op: &Operator) -> Result<()> {
        self.as_mut().apply_operator(op)
    }

    pub fn measure_qubit<R: Rng + ?Sized>(&mut self, qubit: usize, rng: &mut R) -> Result<MeasurementOutcome> {
        self.as_mut().measure_qubit(qubit, rng)
    }

    /// Row-major `[re, im]` pairs in JSON, for fixtures and debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.as_ref().dump()).expect("state dump is always serialisable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dump: StateDump = serde_json::from_str(s)?;
        check_size(dump.n_qubits, DEFAULT_MAX_QUBITS)?;
        let dim = 1usize << dump.n_qubits;
        if dump.entries.len() != dim * dim {
            return Err(Error::shape(dim * dim, dump.entries.len()));
        }
        let m = DenseMatrix::from_fn(dim, dim, |r, c| {
            let [re, im] = dump.entries[r * dim + c];
            C64::new(re, im)
        });
        Self::from_dense(&m, dump.precision)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StateDump {
    n_qubits: usize,
    precision: Precision,
    entries: Vec<[f64; 2]>,
}

/// Borrowed read-only view of one density matrix.
#[derive(Clone, Copy, Debug)]
pub struct StateRef<'a> {
    n_qubits: usize,
    entries: Entries<'a>,
}

impl<'a> StateRef<'a> {
    pub fn new(n_qubits: usize, entries: Entries<'a>) -> Self {
        StateRef { n_qubits, entries }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn precision(&self) -> Precision {
        match self.entries {
            Entries::Single(_) => Precision::Single,
            Entries::Double(_) => Precision::Double,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.dim() * self.dim() * self.precision().component_size()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let d = self.dim();
        each!(self.entries, buf => widen(buf[row * d + col]))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let d = self.dim();
        each!(self.entries, buf => DenseMatrix::from_fn(d, d, |r, c| widen(buf[r * d + c])))
    }

    pub fn to_owned(&self) -> DensityState {
        let storage = match self.entries {
            Entries::Single(v) => Storage::Single(v.to_vec()),
            Entries::Double(v) => Storage::Double(v.to_vec()),
        };
        DensityState { n_qubits: self.n_qubits, storage }
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        each!(self.entries, buf => (0..d).map(|i| widen(buf[i * d + i])).sum())
    }

    /// `max |ρ - ρ†|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        each!(self.entries, buf => {
            let mut worst: f64 = 0.0;
            for r in 0..d {
                for c in r..d {
                    let diff = widen(buf[r * d + c]) - widen(buf[c * d + r]).conj();
                    worst = worst.max(diff.norm());
                }
            }
            worst
        })
    }

    fn check_qubit(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.n_qubits {
            return Err(Error::Index(format!("qubit {qubit} out of range for {}-qubit system", self.n_qubits)));
        }
        Ok(1 << (self.n_qubits - 1 - qubit))
    }

    /// `(p0, p1)` for a computational-basis measurement of `qubit`.
    pub fn branch_probabilities(&self, qubit: usize) -> Result<(f64, f64)> {
        let mask = self.check_qubit(qubit)?;
        let d = self.dim();
        let (mut p0, mut p1) = (0.0, 0.0);
        each!(self.entries, buf => {
            for i in 0..d {
                let p = buf[i * d + i].re.to_f64();
                if i & mask == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
        });
        Ok((p0, p1))
    }

    pub fn probability_of_one(&self, qubit: usize) -> Result<f64> {
        Ok(self.branch_probabilities(qubit)?.1)
    }

    /// Reduced state over `keep`, in the order given. Index contraction over
    /// all other qubits.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityState> {
        let n = self.n_qubits;
        if keep.is_empty() {
            return Err(Error::Index("partial trace must keep at least one qubit".into()));
        }
        let mut seen = vec![false; n];
        for &k in keep {
            if k >= n || seen[k] {
                return Err(Error::Index(format!("invalid or repeated qubit {k} in keep set {keep:?}")));
            }
            seen[k] = true;
        }
        let traced: Vec<usize> = (0..n).filter(|q| !seen[*q]).collect();
        let kd = 1usize << keep.len();
        let td = 1usize << traced.len();
        let d = self.dim();

        let scatter = |sub: usize, qubits: &[usize]| -> usize {
            let m = qubits.len();
            qubits
                .iter()
                .enumerate()
                .filter(|(j, _)| sub >> (m - 1 - j) & 1 == 1)
                .fold(0, |acc, (_, &q)| acc | 1 << (n - 1 - q))
        };
        let keep_offsets: Vec<usize> = (0..kd).map(|a| scatter(a, keep)).collect();
        let traced_offsets: Vec<usize> = (0..td).map(|t| scatter(t, &traced)).collect();

        let reduced = each!(self.entries, buf => {
            DenseMatrix::from_fn(kd, kd, |a, b| {
                traced_offsets
                    .iter()
                    .map(|&t| widen(buf[(keep_offsets[a] | t) * d + (keep_offsets[b] | t)]))
                    .sum()
            })
        });
        let mut out = DensityState::with_limit(keep.len(), self.precision(), n)?;
        out.as_mut().store_dense(&reduced);
        Ok(out)
    }

    fn dump(&self) -> StateDump {
        let entries = each!(self.entries, buf => buf.iter().map(|z| {
            let w = widen(*z);
            [w.re, w.im]
        }).collect());
        StateDump { n_qubits: self.n_qubits, precision: self.precision(), entries }
    }
}

/// Borrowed mutable view of one density matrix; this is what gates and
/// measurements operate on, whether the matrix is owned or lives in an
/// ensemble block.
#[derive(Debug)]
pub struct StateMut<'a> {
    n_qubits: usize,
    entries: EntriesMut<'a>,
}

impl<'a> StateMut<'a> {
    pub fn new(n_qubits: usize, entries: EntriesMut<'a>) -> Self {
        StateMut { n_qubits, entries }
    }

    pub fn as_ref(&self) -> StateRef<'_> {
        let entries = match &self.entries {
            EntriesMut::Single(v) => Entries::Single(v),
            EntriesMut::Double(v) => Entries::Double(v),
        };
        StateRef { n_qubits: self.n_qubits, entries }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.as_ref().get(row, col)
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        let d = self.dim();
        each_mut!(&mut self.entries, buf => buf[row * d + col] = narrow(value));
    }

    pub(crate) fn store_dense(&mut self, m: &DenseMatrix) {
        let d = self.dim();
        each_mut!(&mut self.entries, buf => {
            for r in 0..d {
                for c in 0..d {
                    buf[r * d + c] = narrow(m[(r, c)]);
                }
            }
        });
    }

    /// Resets to `|0…0><0…0|`.
    pub fn reset(&mut self) {
        each_mut!(&mut self.entries, buf => {
            buf.iter_mut().for_each(|z| *z = Complex::default());
            buf[0] = Complex::new(num_traits::One::one(), num_traits::Zero::zero());
        });
    }

    /// `ρ ← U ρ U†` for a dense `2^N x 2^N` unitary; not checked for unitarity.
    pub fn apply_unitary(&mut self, u: &DenseMatrix) -> Result<()> {
        let d = self.dim();
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::shape(format!("{d}x{d}"), format!("{}x{}", u.nrows(), u.ncols())));
        }
        let rho = self.as_ref().to_dense();
        let out = u * rho * u.adjoint();
        self.store_dense(&out);
        Ok(())
    }

    /// [`apply_unitary`](Self::apply_unitary), rejecting `u` whose
    /// `U U† - I` exceeds `tol` entrywise.
    pub fn apply_unitary_checked(&mut self, u: &DenseMatrix, tol: f64) -> Result<()> {
        if u.nrows() == u.ncols() {
            let defect = unitarity_defect(u);
            if defect > tol {
                return Err(Error::Numerical(format!("operator is not unitary (defect {defect:e})")));
            }
        }
        self.apply_unitary(u)
    }

    /// `ρ ← U ρ U†` for a row-compressed operator.
    pub fn apply_operator(&mut self, op: &Operator) -> Result<()> {
        let d = self.dim();
        if op.dim() != d {
            return Err(Error::shape(d, op.dim()));
        }
        each_mut!(&mut self.entries, buf => conjugate(buf, d, op));
        Ok(())
    }

    /// Samples a computational-basis outcome for `qubit` and collapses the
    /// state onto it. Dimension is preserved.
    pub fn measure_qubit<R: Rng + ?Sized>(&mut self, qubit: usize, rng: &mut R) -> Result<MeasurementOutcome> {
        let (p0, p1) = self.as_ref().branch_probabilities(qubit)?;
        if p0.max(p1) < CORRUPT_PROBABILITY {
            return Err(Error::Numerical(format!(
                "both outcomes of qubit {qubit} have negligible probability ({p0:e}, {p1:e})"
            )));
        }
        let u: f64 = rng.gen();
        let (bit, p) = if u * (p0 + p1) < p0 { (0u8, p0) } else { (1u8, p1) };
        self.collapse(qubit, bit, p);
        Ok(MeasurementOutcome { bit, probability: p })
    }

    /// Projects onto `qubit = bit` and renormalises by `probability`.
    pub(crate) fn collapse(&mut self, qubit: usize, bit: u8, probability: f64) {
        let n = self.n_qubits;
        let mask = 1usize << (n - 1 - qubit);
        let want = if bit == 1 { mask } else { 0 };
        let d = self.dim();
        each_mut!(&mut self.entries, buf => collapse_buf(buf, d, mask, want, probability));
    }
}

fn collapse_buf<T: Real>(buf: &mut [Complex<T>], d: usize, mask: usize, want: usize, probability: f64) {
    let scale = T::from_f64(1.0 / probability);
    for r in 0..d {
        let row = &mut buf[r * d..(r + 1) * d];
        if r & mask != want {
            row.iter_mut().for_each(|z| *z = Complex::default());
            continue;
        }
        for (c, z) in row.iter_mut().enumerate() {
            if c & mask != want {
                *z = Complex::default();
            } else {
                *z = *z * scale;
            }
        }
    }
}

fn conjugate<T: Real>(rho: &mut [Complex<T>], d: usize, op: &Operator) {
    // tmp = U ρ
    let mut tmp = vec![Complex::<T>::default(); d * d];
    for r in 0..d {
        let out = &mut tmp[r * d..(r + 1) * d];
        for (k, u) in op.row(r) {
            let u: Complex<T> = narrow(u);
            let src = &rho[k * d..(k + 1) * d];
            for (o, s) in out.iter_mut().zip(src) {
                *o = *o + u * *s;
            }
        }
    }
    // ρ = tmp U†, i.e. ρ[r][c] = Σ_k tmp[r][k] conj(U[c][k])
    let rows: Vec<Vec<(usize, Complex<T>)>> =
        (0..d).map(|c| op.row(c).map(|(k, u)| (k, narrow::<T>(u).conj())).collect()).collect();
    for r in 0..d {
        let src = &tmp[r * d..(r + 1) * d];
        let out = &mut rho[r * d..(r + 1) * d];
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = Complex::<T>::default();
            for &(k, u) in &rows[c] {
                acc = acc + src[k] * u;
            }
            *o = acc;
        }
    }
}

impl PartialEq<DenseMatrix> for DensityState {
    fn eq(&self, other: &DenseMatrix) -> bool {
        self.to_dense() == *other
    }
}

/// `max |a - b|` entrywise; panics if shapes differ.
pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
