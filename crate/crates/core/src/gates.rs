//! Built-in gate catalogue, identity-padded expansion to N-qubit operators,
//! the shared operator cache, and the quantum Fourier transform circuit.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::Matrix2;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Operator, C64, ONE, ZERO};
use crate::qstate::StateMut;
use crate::qstream::QubitRef;

pub type Matrix2c = Matrix2<C64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Angle quantum used when hashing gate parameters into cache keys.
const PARAM_QUANTUM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Rx,
    Ry,
    Rz,
    Phase,
    Cnot,
    Cphase,
    Cu,
    Swap,
    Toffoli,
}

impl GateKind {
    pub const ALL: [GateKind; 13] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Phase,
        GateKind::Cnot,
        GateKind::Cphase,
        GateKind::Cu,
        GateKind::Swap,
        GateKind::Toffoli,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cphase | GateKind::Cu | GateKind::Swap => 2,
            GateKind::Toffoli => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Phase => "PHASE",
            GateKind::Cnot => "CNOT",
            GateKind::Cphase => "CPHASE",
            GateKind::Cu => "CU",
            GateKind::Swap => "SWAP",
            GateKind::Toffoli => "TOFFOLI",
        }
    }
}

impl std::str::FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == upper)
            .ok_or_else(|| Error::InvalidGate(format!("unknown gate {s:?}")))
    }
}

/// A catalogue gate together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    H,
    X,
    Y,
    Z,
    Rx(f64),
    Ry(f64),
    Rz(f64),
    Phase(f64),
    Cnot,
    /// Controlled `diag(1, e^{iφ})`.
    Cphase(f64),
    /// Controlled arbitrary 2x2 unitary.
    Cu(Matrix2c),
    Swap,
    Toffoli,
}

impl Gate {
    /// Builds a gate from its name and real parameters. `CU` takes its
    /// unitary as eight reals, row-major `re, im` pairs.
    pub fn from_parts(kind: GateKind, params: &[f64]) -> Result<Gate> {
        let want = match kind {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Phase | GateKind::Cphase => 1,
            GateKind::Cu => 8,
            _ => 0,
        };
        if params.len() != want {
            return Err(Error::InvalidGate(format!("{} takes {want} parameter(s), got {}", kind.name(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGate(format!("{} parameters must be finite", kind.name())));
        }
        Ok(match kind {
            GateKind::H => Gate::H,
            GateKind::X => Gate::X,
            GateKind::Y => Gate::Y,
            GateKind::Z => Gate::Z,
            GateKind::Rx => Gate::Rx(params[0]),
            GateKind::Ry => Gate::Ry(params[0]),
            GateKind::Rz => Gate::Rz(params[0]),
            GateKind::Phase => Gate::Phase(params[0]),
            GateKind::Cnot => Gate::Cnot,
            GateKind::Cphase => Gate::Cphase(params[0]),
            GateKind::Cu => {
                let p = params;
                let u = Matrix2c::new(
                    C64::new(p[0], p[1]),
                    C64::new(p[2], p[3]),
                    C64::new(p[4], p[5]),
                    C64::new(p[6], p[7]),
                );
                Gate::controlled(u)?
            }
            GateKind::Swap => Gate::Swap,
            GateKind::Toffoli => Gate::Toffoli,
        })
    }

    /// `CU` with a unitarity check on `u`.
    pub fn controlled(u: Matrix2c) -> Result<Gate> {
        let defect = (u * u.adjoint() - Matrix2c::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-9 {
            return Err(Error::InvalidGate(format!("CU operand is not unitary (defect {defect:e})")));
        }
        Ok(Gate::Cu(u))
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::H => GateKind::H,
            Gate::X => GateKind::X,
            Gate::Y => GateKind::Y,
            Gate::Z => GateKind::Z,
            Gate::Rx(_) => GateKind::Rx,
            Gate::Ry(_) => GateKind::Ry,
            Gate::Rz(_) => GateKind::Rz,
            Gate::Phase(_) => GateKind::Phase,
            Gate::Cnot => GateKind::Cnot,
            Gate::Cphase(_) => GateKind::Cphase,
            Gate::Cu(_) => GateKind::Cu,
            Gate::Swap => GateKind::Swap,
            Gate::Toffoli => GateKind::Toffoli,
        }
    }

    pub fn arity(&self) -> usize {
        self.kind().arity()
    }

    /// The single-qubit block: the gate itself for arity 1, the controlled
    /// operand for CNOT/CPHASE/CU/TOFFOLI.
    fn single_qubit_block(&self) -> Option<Matrix2c> {
        let half = |t: f64| (t / 2.0).cos();
        let sin_half = |t: f64| (t / 2.0).sin();
        Some(match *self {
            Gate::H => Matrix2c::new(ONE, ONE, ONE, -ONE) * C64::new(FRAC_1_SQRT_2, 0.0),
            Gate::X | Gate::Cnot | Gate::Toffoli => pauli_x(),
            Gate::Y => Matrix2c::new(ZERO, -I, I, ZERO),
            Gate::Z => Matrix2c::new(ONE, ZERO, ZERO, -ONE),
            Gate::Rx(t) => {
                let (c, s) = (C64::new(half(t), 0.0), -I * sin_half(t));
                Matrix2c::new(c, s, s, c)
            }
            Gate::Ry(t) => {
                let (c, s) = (half(t), sin_half(t));
                Matrix2c::new(C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0))
            }
            Gate::Rz(t) => Matrix2c::new(C64::new(half(t), -sin_half(t)), ZERO, ZERO, C64::new(half(t), sin_half(t))),
            Gate::Phase(p) | Gate::Cphase(p) => Matrix2c::new(ONE, ZERO, ZERO, C64::from_polar(1.0, p)),
            Gate::Cu(u) => u,
            Gate::Swap => return None,
        })
    }

    fn fingerprint(&self) -> Vec<i64> {
        let q = |x: f64| (x / PARAM_QUANTUM).round() as i64;
        match self {
            Gate::Rx(t) | Gate::Ry(t) | Gate::Rz(t) | Gate::Phase(t) | Gate::Cphase(t) => vec![q(*t)],
            Gate::Cu(u) => u.iter().flat_map(|z| [q(z.re), q(z.im)]).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Rx(t) | Gate::Ry(t) | Gate::Rz(t) | Gate::Phase(t) | Gate::Cphase(t) => {
                write!(f, "{}({t})", self.kind().name())
            }
            _ => f.write_str(self.kind().name()),
        }
    }
}

fn pauli_x() -> Matrix2c {
    Matrix2c::new(ZERO, ONE, ONE, ZERO)
}

fn projector(bit: u8) -> Matrix2c {
    if bit == 0 {
        Matrix2c::new(ONE, ZERO, ZERO, ZERO)
    } else {
        Matrix2c::new(ZERO, ZERO, ZERO, ONE)
    }
}

fn to_dense(m: &Matrix2c) -> DenseMatrix {
    DenseMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}

/// Base matrix of a gate on its own `arity` qubits, first target most
/// significant.
pub fn gate_matrix(gate: &Gate) -> DenseMatrix {
    match gate.arity() {
        1 => to_dense(&gate.single_qubit_block().expect("single-qubit gate")),
        2 if *gate == Gate::Swap => DenseMatrix::from_fn(4, 4, |r, c| {
            if (r == 0 && c == 0) || (r == 3 && c == 3) || (r == 1 && c == 2) || (r == 2 && c == 1) {
                ONE
            } else {
                ZERO
            }
        }),
        arity => {
            // controlled gate: identity except the last 2x2 block
            let u = gate.single_qubit_block().expect("controlled gate");
            let dim = 1 << arity;
            DenseMatrix::from_fn(dim, dim, |r, c| {
                if r >= dim - 2 && c >= dim - 2 {
                    u[(r - (dim - 2), c - (dim - 2))]
                } else if r == c {
                    ONE
                } else {
                    ZERO
                }
            })
        }
    }
}

/// Kronecker product over all `n` qubits of the given per-qubit factors,
/// with identity on every unlisted qubit.
fn tensor(n: usize, factors: &[(usize, Matrix2c)]) -> Operator {
    let mut acc: Option<Operator> = None;
    // consecutive identity factors fold into one block
    let mut pending_identity = 0usize;
    let flush = |acc: Option<Operator>, k: usize| -> Option<Operator> {
        if k == 0 {
            return acc;
        }
        let id = Operator::identity(1 << k);
        Some(match acc {
            Some(a) => a.kron(&id),
            None => id,
        })
    };
    for q in 0..n {
        match factors.iter().find(|(t, _)| *t == q) {
            None => pending_identity += 1,
            Some((_, m)) => {
                acc = flush(acc, pending_identity);
                pending_identity = 0;
                let f = Operator::from_dense(&to_dense(m));
                acc = Some(match acc {
                    Some(a) => a.kron(&f),
                    None => f,
                });
            }
        }
    }
    flush(acc, pending_identity).expect("n >= 1")
}

/// `I ⊗ … ⊗ U ⊗ … ⊗ I` with `U` on `qubit`.
pub fn padded(u: &Matrix2c, qubit: usize, n: usize) -> Operator {
    tensor(n, &[(qubit, *u)])
}

/// `|0><0|_c ⊗ 1 + |1><1|_c ⊗ U_t`.
pub fn controlled_projector_form(u: &Matrix2c, control: usize, target: usize, n: usize) -> Operator {
    tensor(n, &[(control, projector(0))]).add(&tensor(n, &[(control, projector(1)), (target, *u)]))
}

/// Four-projector Toffoli sum; only the `|11>` branch flips the target.
pub fn toffoli_projector_form(c1: usize, c2: usize, target: usize, n: usize) -> Operator {
    let mut sum: Option<Operator> = None;
    for (b1, b2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let mut factors = vec![(c1, projector(b1)), (c2, projector(b2))];
        if (b1, b2) == (1, 1) {
            factors.push((target, pauli_x()));
        }
        let term = tensor(n, &factors);
        sum = Some(match sum {
            Some(s) => s.add(&term),
            None => term,
        });
    }
    sum.expect("four terms")
}

/// `I_{2^first} ⊗ M ⊗ I` for a gate on the contiguous ascending qubits
/// `first..first+arity`.
pub fn embed_adjacent(m: &DenseMatrix, first: usize, n: usize) -> Operator {
    let arity = m.nrows().trailing_zeros() as usize;
    assert!(first + arity <= n, "gate does not fit");
    let mut op = Operator::identity(1 << first).kron(&Operator::from_dense(m));
    if first + arity < n {
        op = op.kron(&Operator::identity(1 << (n - first - arity)));
    }
    op
}

fn validate_targets(gate: &Gate, targets: &[usize], n: usize) -> Result<()> {
    if targets.len() != gate.arity() {
        return Err(Error::InvalidGate(format!(
            "{} acts on {} qubit(s), got {} target(s)",
            gate.kind().name(),
            gate.arity(),
            targets.len()
        )));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::Index(format!("target {t} out of range for {n}-qubit system")));
        }
        if targets[..i].contains(&t) {
            return Err(Error::Index(format!("duplicate target {t} in {targets:?}")));
        }
    }
    Ok(())
}

/// Uncached expansion of `gate` on `targets` to an `n`-qubit operator.
pub fn expand_uncached(gate: &Gate, targets: &[usize], n: usize) -> Result<Operator> {
    validate_targets(gate, targets, n)?;
    Ok(match gate {
        Gate::Swap => {
            let (j, k) = (targets[0], targets[1]);
            let x = pauli_x();
            let cnot_jk = controlled_projector_form(&x, j, k, n);
            let cnot_kj = controlled_projector_form(&x, k, j, n);
            cnot_kj.mul(&cnot_jk).mul(&cnot_kj)
        }
        Gate::Toffoli => toffoli_projector_form(targets[0], targets[1], targets[2], n),
        Gate::Cnot | Gate::Cphase(_) | Gate::Cu(_) => {
            let u = gate.single_qubit_block().expect("controlled operand");
            controlled_projector_form(&u, targets[0], targets[1], n)
        }
        _ => padded(&gate.single_qubit_block().expect("single-qubit gate"), targets[0], n),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    kind: GateKind,
    params: Vec<i64>,
    targets: Vec<usize>,
    n: usize,
}

struct CacheEntry {
    op: Arc<Operator>,
    last_used: AtomicU64,
}

/// Expanded operators keyed by gate, parameters, targets and system size.
///
/// Readers share a read lock; a miss computes outside the lock and inserts,
/// so concurrent misses on one key may both compute (the values agree).
pub struct OperatorCache {
    enabled: bool,
    capacity: Option<usize>,
    entries: RwLock<HashMap<CacheKey, CacheEntry>>,
    tick: AtomicU64,
    misses: AtomicU64,
}

impl Default for OperatorCache {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for OperatorCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorCache")
            .field("enabled", &self.enabled)
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .finish()
    }
}

impl OperatorCache {
    /// Unbounded cache.
    pub fn new() -> Self {
        OperatorCache {
            enabled: true,
            capacity: None,
            entries: RwLock::new(HashMap::new()),
            tick: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Cache holding at most `capacity` operators, evicting the least
    /// recently used.
    pub fn bounded(capacity: usize) -> Self {
        OperatorCache { capacity: Some(capacity.max(1)), ..Self::new() }
    }

    /// Pass-through that expands every request afresh.
    pub fn disabled() -> Self {
        OperatorCache { enabled: false, ..Self::new() }
    }

    /// Process-wide cache used by the convenience gate functions.
    pub fn global() -> &'static OperatorCache {
        static GLOBAL: OnceLock<OperatorCache> = OnceLock::new();
        GLOBAL.get_or_init(OperatorCache::new)
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of expansions performed (cache misses).
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn clear(&self) {
        self.entries.write().clear();
    }

    pub fn expand(&self, gate: &Gate, targets: &[usize], n: usize) -> Result<Arc<Operator>> {
        if !self.enabled {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return expand_uncached(gate, targets, n).map(Arc::new);
        }
        let key = CacheKey { kind: gate.kind(), params: gate.fingerprint(), targets: targets.to_vec(), n };
        let now = self.tick.fetch_add(1, Ordering::Relaxed);
        if let Some(entry) = self.entries.read().get(&key) {
            entry.last_used.store(now, Ordering::Relaxed);
            return Ok(entry.op.clone());
        }
        let op = Arc::new(expand_uncached(gate, targets, n)?);
        self.misses.fetch_add(1, Ordering::Relaxed);
        let mut entries = self.entries.write();
        if let Some(cap) = self.capacity {
            while entries.len() >= cap {
                let oldest = entries
                    .iter()
                    .min_by_key(|(_, e)| e.last_used.load(Ordering::Relaxed))
                    .map(|(k, _)| k.clone())
                    .expect("non-empty");
                entries.remove(&oldest);
            }
        }
        entries.insert(key, CacheEntry { op: op.clone(), last_used: AtomicU64::new(now) });
        Ok(op)
    }
}

/// Identity-padded `n`-qubit operator for `gate` on `targets`, via `cache`.
pub fn expand_operator(gate: &Gate, targets: &[usize], n: usize, cache: &OperatorCache) -> Result<Arc<Operator>> {
    cache.expand(gate, targets, n)
}

/// Applies `gate` to qubit positions of an already-borrowed state.
pub fn apply_to_state(state: &mut StateMut<'_>, gate: &Gate, targets: &[usize], cache: &OperatorCache) -> Result<()> {
    let op = cache.expand(gate, targets, state.n_qubits())?;
    state.apply_operator(&op)
}

/// Common system and qubit positions of a list of references.
fn shared_targets(qubits: &[&QubitRef]) -> Result<Vec<usize>> {
    let first = qubits.first().ok_or_else(|| Error::InvalidGate("gate needs at least one qubit".into()))?;
    if qubits.iter().any(|q| !q.same_system(first)) {
        return Err(Error::CrossSystem);
    }
    Ok(qubits.iter().map(|q| q.qubit()).collect())
}

pub fn apply_gate_with(gate: &Gate, qubits: &[&QubitRef], cache: &OperatorCache) -> Result<()> {
    let targets = shared_targets(qubits)?;
    let first = qubits[0];
    let n = first.system_size();
    let op = cache.expand(gate, &targets, n)?;
    first.system().with_state(|s| s.apply_operator(&op))?
}

/// Applies `gate` to one to three qubits of the same system using the
/// process-wide cache.
pub fn apply_gate(gate: &Gate, qubits: &[&QubitRef]) -> Result<()> {
    apply_gate_with(gate, qubits, OperatorCache::global())
}

pub fn h(q: &QubitRef) -> Result<()> {
    apply_gate(&Gate::H, &[q])
}

pub fn x(q: &QubitRef) -> Result<()> {
    apply_gate(&Gate::X, &[q])
}

pub fn y(q: &QubitRef) -> Result<()> {
    apply_gate(&Gate::Y, &[q])
}

pub fn z(q: &QubitRef) -> Result<()> {
    apply_gate(&Gate::Z, &[q])
}

pub fn rx(q: &QubitRef, theta: f64) -> Result<()> {
    apply_gate(&Gate::Rx(theta), &[q])
}

pub fn ry(q: &QubitRef, theta: f64) -> Result<()> {
    apply_gate(&Gate::Ry(theta), &[q])
}

pub fn rz(q: &QubitRef, theta: f64) -> Result<()> {
    apply_gate(&Gate::Rz(theta), &[q])
}

pub fn phase(q: &QubitRef, phi: f64) -> Result<()> {
    apply_gate(&Gate::Phase(phi), &[q])
}

pub fn cnot(control: &QubitRef, target: &QubitRef) -> Result<()> {
    apply_gate(&Gate::Cnot, &[control, target])
}

pub fn cphase(control: &QubitRef, target: &QubitRef, phi: f64) -> Result<()> {
    apply_gate(&Gate::Cphase(phi), &[control, target])
}

pub fn cu(control: &QubitRef, target: &QubitRef, u: Matrix2c) -> Result<()> {
    apply_gate(&Gate::controlled(u)?, &[control, target])
}

pub fn swap(a: &QubitRef, b: &QubitRef) -> Result<()> {
    apply_gate(&Gate::Swap, &[a, b])
}

pub fn toffoli(c1: &QubitRef, c2: &QubitRef, target: &QubitRef) -> Result<()> {
    apply_gate(&Gate::Toffoli, &[c1, c2, target])
}

/// Gate list of the Fourier network on `n` qubits, as positions into the
/// caller's qubit list: `H` on each qubit `i`, then controlled phases
/// `φ_m = 2π/2^m` from each later qubit `i+m-1`. No final swaps, so output
/// bit `y_(n-1-i)` ends on qubit `i`.
pub fn qft_circuit(n: usize) -> Vec<(Gate, Vec<usize>)> {
    let mut ops = Vec::new();
    for i in 0..n {
        ops.push((Gate::H, vec![i]));
        for m in 2..=(n - i) {
            ops.push((Gate::Cphase(2.0 * PI / (1u64 << m) as f64), vec![i + m - 1, i]));
        }
    }
    ops
}

/// Applies the Fourier network to `qubits` (all in one system); list order
/// fixes the transform's bit order, with the output bit-reversed.
pub fn build_qft(qubits: &[QubitRef]) -> Result<()> {
    let refs: Vec<&QubitRef> = qubits.iter().collect();
    shared_targets(&refs)?;
    for (gate, positions) in qft_circuit(qubits.len()) {
        let targets: Vec<&QubitRef> = positions.iter().map(|&p| &qubits[p]).collect();
        apply_gate(&gate, &targets)?;
    }
    Ok(())
}

/// [`build_qft`] on an owned/borrowed state with explicit qubit positions.
pub fn apply_qft_to_state(state: &mut StateMut<'_>, qubits: &[usize], cache: &OperatorCache) -> Result<()> {
    for (gate, positions) in qft_circuit(qubits.len()) {
        let targets: Vec<usize> = positions.iter().map(|&p| qubits[p]).collect();
        apply_to_state(state, &gate, &targets, cache)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{unitarity_defect, Precision};
    use crate::qstate::{max_abs_diff, DensityState};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        let n = rows.len();
        DenseMatrix::from_fn(n, n, |r, col| c(rows[r][col]))
    }

    /// Reference expansion by direct basis substitution: entry (r, c) is the
    /// gate entry on the target bits when all other bits agree.
    fn substitution_oracle(gate: &Gate, targets: &[usize], n: usize) -> DenseMatrix {
        let g = gate_matrix(gate);
        let k = targets.len();
        let d = 1 << n;
        let sub = |idx: usize| -> usize {
            targets.iter().enumerate().fold(0, |acc, (j, &t)| acc | ((idx >> (n - 1 - t)) & 1) << (k - 1 - j))
        };
        let mask: usize = targets.iter().map(|&t| 1 << (n - 1 - t)).sum();
        DenseMatrix::from_fn(d, d, |r, col| if r & !mask == col & !mask { g[(sub(r), sub(col))] } else { ZERO })
    }

    #[test]
    fn base_matrices() {
        assert_eq!(
            gate_matrix(&Gate::Cnot),
            dense(&[&[1., 0., 0., 0.], &[0., 1., 0., 0.], &[0., 0., 0., 1.], &[0., 0., 1., 0.]])
        );
        assert!(max_abs_diff(&gate_matrix(&Gate::Rx(0.0)), &DenseMatrix::identity(2, 2)) == 0.0);
        assert!(max_abs_diff(&gate_matrix(&Gate::Phase(PI)), &gate_matrix(&Gate::Z)) < 1e-15);
        let y = gate_matrix(&Gate::Y);
        assert_eq!(y[(0, 1)], C64::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], C64::new(0.0, 1.0));
        // R_x(θ) = cos(θ/2) I - i sin(θ/2) σx
        let t = 0.7;
        let rx = gate_matrix(&Gate::Rx(t));
        let expect =
            DenseMatrix::identity(2, 2) * c((t / 2.0).cos()) - gate_matrix(&Gate::X) * C64::new(0.0, (t / 2.0).sin());
        assert!(max_abs_diff(&rx, &expect) < 1e-15);
        let rz = gate_matrix(&Gate::Rz(t));
        let expect =
            DenseMatrix::identity(2, 2) * c((t / 2.0).cos()) - gate_matrix(&Gate::Z) * C64::new(0.0, (t / 2.0).sin());
        assert!(max_abs_diff(&rz, &expect) < 1e-15);
        let ry = gate_matrix(&Gate::Ry(t));
        let expect =
            DenseMatrix::identity(2, 2) * c((t / 2.0).cos()) - gate_matrix(&Gate::Y) * C64::new(0.0, (t / 2.0).sin());
        assert!(max_abs_diff(&ry, &expect) < 1e-15);
    }

    #[test]
    fn every_base_matrix_is_unitary() {
        for g in [
            Gate::H,
            Gate::X,
            Gate::Y,
            Gate::Z,
            Gate::Rx(1.1),
            Gate::Ry(-0.3),
            Gate::Rz(2.5),
            Gate::Phase(0.4),
            Gate::Cnot,
            Gate::Cphase(1.9),
            Gate::Cu(Matrix2c::new(ZERO, ONE, ONE, ZERO)),
            Gate::Swap,
            Gate::Toffoli,
        ] {
            assert!(unitarity_defect(&gate_matrix(&g)) < 1e-12, "{g}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(Gate::from_parts(GateKind::Rx, &[]).is_err());
        assert!(Gate::from_parts(GateKind::H, &[1.0]).is_err());
        assert!(Gate::from_parts(GateKind::Phase, &[f64::NAN]).is_err());
        assert!(Gate::from_parts(GateKind::Cu, &[1., 0., 1., 0., 0., 0., 1., 0.]).is_err());
        assert_eq!(Gate::from_parts(GateKind::Cu, &[0., 0., 1., 0., 1., 0., 0., 0.]).unwrap().kind(), GateKind::Cu);
        assert_eq!("toffoli".parse::<GateKind>().unwrap(), GateKind::Toffoli);
        assert!("TOFOLLI".parse::<GateKind>().is_err());
    }

    #[test]
    fn expansion_examples() {
        let cache = OperatorCache::new();
        let h = expand_operator(&Gate::H, &[0], 1, &cache).unwrap();
        assert_eq!(h.to_dense(), gate_matrix(&Gate::H));

        let x1 = expand_operator(&Gate::X, &[1], 2, &cache).unwrap();
        assert_eq!(x1.to_dense(), DenseMatrix::identity(2, 2).kronecker(&gate_matrix(&Gate::X)));

        let reversed = expand_operator(&Gate::Cnot, &[1, 0], 2, &cache).unwrap();
        assert_eq!(
            reversed.to_dense(),
            dense(&[&[1., 0., 0., 0.], &[0., 0., 0., 1.], &[0., 0., 1., 0.], &[0., 1., 0., 0.]])
        );

        assert!(matches!(expand_operator(&Gate::Cnot, &[1, 1], 2, &cache), Err(Error::Index(_))));
        assert!(matches!(expand_operator(&Gate::Cnot, &[0, 2], 2, &cache), Err(Error::Index(_))));
        assert!(matches!(expand_operator(&Gate::Cnot, &[0], 2, &cache), Err(Error::InvalidGate(_))));
    }

    #[test]
    fn expansion_agrees_with_substitution_oracle() {
        let gates = [
            (Gate::Ry(0.9), vec![2]),
            (Gate::Cnot, vec![3, 1]),
            (Gate::Cphase(0.6), vec![0, 2]),
            (Gate::Cu(gate_matrix(&Gate::Y).fixed_view::<2, 2>(0, 0).into_owned()), vec![2, 0]),
            (Gate::Swap, vec![3, 0]),
            (Gate::Toffoli, vec![2, 0, 3]),
            (Gate::Toffoli, vec![0, 1, 2]),
        ];
        for (g, targets) in gates {
            let op = expand_uncached(&g, &targets, 4).unwrap();
            let oracle = substitution_oracle(&g, &targets, 4);
            assert!(max_abs_diff(&op.to_dense(), &oracle) < 1e-15, "{g} on {targets:?}");
            assert!(op.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn adjacent_cnot_projector_form_equals_kronecker_form() {
        for n in 2..=4 {
            for first in 0..n - 1 {
                let projector = expand_uncached(&Gate::Cnot, &[first, first + 1], n).unwrap();
                let kron = embed_adjacent(&gate_matrix(&Gate::Cnot), first, n);
                assert_eq!(projector, kron);
            }
        }
    }

    #[test]
    fn toffoli_truth_table() {
        let op = expand_uncached(&Gate::Toffoli, &[0, 1, 2], 3).unwrap();
        for input in 0..8usize {
            let (i, j, k) = (input >> 2 & 1, input >> 1 & 1, input & 1);
            let out = (i << 2) | (j << 1) | (k ^ (i & j));
            let col: Vec<(usize, C64)> = (0..8).map(|r| (r, op.get(r, input))).filter(|(_, v)| *v != ZERO).collect();
            assert_eq!(col, vec![(out, ONE)]);
        }
    }

    #[test]
    fn swap_moves_populations() {
        let cache = OperatorCache::new();
        let mut s = DensityState::from_pure(&[ZERO, ONE, ZERO, ZERO], Precision::Double).unwrap();
        apply_to_state(&mut s.as_mut(), &Gate::Swap, &[0, 1], &cache).unwrap();
        assert_eq!(s.get(2, 2), ONE);
        assert_eq!(s.get(1, 1), ZERO);
    }

    #[test]
    fn cache_hits_and_bounds() {
        let cache = OperatorCache::new();
        let a = cache.expand(&Gate::Rx(0.5), &[1], 3).unwrap();
        let b = cache.expand(&Gate::Rx(0.5 + 1e-14), &[1], 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.misses(), 1);
        cache.expand(&Gate::Rx(0.5), &[2], 3).unwrap();
        assert_eq!(cache.len(), 2);

        let bounded = OperatorCache::bounded(2);
        bounded.expand(&Gate::H, &[0], 2).unwrap();
        bounded.expand(&Gate::X, &[0], 2).unwrap();
        bounded.expand(&Gate::H, &[0], 2).unwrap();
        bounded.expand(&Gate::Z, &[0], 2).unwrap();
        assert_eq!(bounded.len(), 2);
        // X was least recently used
        bounded.expand(&Gate::H, &[0], 2).unwrap();
        assert_eq!(bounded.misses(), 3);

        let off = OperatorCache::disabled();
        off.expand(&Gate::H, &[0], 1).unwrap();
        off.expand(&Gate::H, &[0], 1).unwrap();
        assert_eq!(off.misses(), 2);
        assert!(off.is_empty());
    }

    #[test]
    fn qft_single_qubit_is_hadamard() {
        assert_eq!(qft_circuit(1), vec![(Gate::H, vec![0])]);
        let cache = OperatorCache::new();
        let mut s = DensityState::new(2, Precision::Double).unwrap();
        apply_qft_to_state(&mut s.as_mut(), &[0, 1], &cache).unwrap();
        let uniform = DenseMatrix::from_element(4, 4, c(0.25));
        assert!(max_abs_diff(&s.to_dense(), &uniform) < 1e-15);
    }
}
