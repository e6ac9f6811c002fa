//! Ensembles of equally sized systems kept in one contiguous allocation.
//!
//! System `i` occupies entries `[i * 4^N, (i + 1) * 4^N)` of the block. The
//! block is shared by every agent of a simulation; a qubit's system is
//! touched only by the agent currently holding that qubit, and holding moves
//! only through channels. Each system additionally has an uncontended
//! exclusive-access guard so that two agents holding different qubits of one
//! system never race on its matrix.

use std::cell::{Cell, UnsafeCell};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex;
use parking_lot::{Mutex, MutexGuard};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Precision, Real};
use crate::qstate::{check_size, DensityState, EntriesMut, MeasurementOutcome, StateMut, StateRef, DEFAULT_MAX_QUBITS};

static NEXT_STREAM_ID: AtomicU64 = AtomicU64::new(1);
static NEXT_CONTEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static CONTEXT_ID: Cell<u64> = const { Cell::new(0) };
}

/// Small nonzero identifier of the calling thread.
fn context_id() -> u64 {
    CONTEXT_ID.with(|id| {
        if id.get() == 0 {
            id.set(NEXT_CONTEXT_ID.fetch_add(1, Ordering::Relaxed));
        }
        id.get()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamOptions {
    pub precision: Precision,
    /// Visible to every execution context of a run. A private stream may be
    /// touched only from the first context that accesses it.
    pub shared: bool,
    pub max_qubits: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions { precision: Precision::Double, shared: true, max_qubits: DEFAULT_MAX_QUBITS }
    }
}

enum Block {
    Single(Box<[UnsafeCell<Complex<f32>>]>),
    Double(Box<[UnsafeCell<Complex<f64>>]>),
}

fn allocate<T: Real>(count: usize, per_system: usize) -> Result<Box<[UnsafeCell<Complex<T>>]>> {
    let len = count
        .checked_mul(per_system)
        .ok_or_else(|| Error::Resource(format!("{count} systems of {per_system} entries overflow")))?;
    let mut v: Vec<UnsafeCell<Complex<T>>> = Vec::new();
    v.try_reserve_exact(len).map_err(|e| {
        Error::Resource(format!("cannot allocate {} bytes: {e}", len * std::mem::size_of::<Complex<T>>()))
    })?;
    v.resize_with(len, || UnsafeCell::new(Complex::default()));
    for i in 0..count {
        *v[i * per_system].get_mut() = Complex::new(T::one(), T::zero());
    }
    Ok(v.into_boxed_slice())
}

struct SystemLock {
    mutex: Mutex<()>,
    owner: AtomicU64,
}

/// Contiguous block of `count` density matrices on `system_size` qubits.
pub struct EnsembleStore {
    id: u64,
    system_size: usize,
    count: usize,
    block: Block,
    locks: Box<[SystemLock]>,
    shared: bool,
    private_owner: AtomicU64,
}

// SAFETY: entries of system `i` are only reachable through a `SystemView`,
// which holds `locks[i]` for its whole lifetime, so no two contexts alias a
// system's entries mutably.
unsafe impl Sync for EnsembleStore {}
unsafe impl Send for EnsembleStore {}

impl fmt::Debug for EnsembleStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnsembleStore")
            .field("id", &self.id)
            .field("system_size", &self.system_size)
            .field("count", &self.count)
            .field("precision", &self.precision())
            .field("shared", &self.shared)
            .finish()
    }
}

impl EnsembleStore {
    /// Shared stream of `count` systems, each `|0…0><0…0|`.
    pub fn new(system_size: usize, count: usize, precision: Precision) -> Result<Arc<Self>> {
        Self::with_options(system_size, count, StreamOptions { precision, ..Default::default() })
    }

    pub fn with_options(system_size: usize, count: usize, options: StreamOptions) -> Result<Arc<Self>> {
        check_size(system_size, options.max_qubits)?;
        let per_system = 1usize << (2 * system_size);
        let block = match options.precision {
            Precision::Single => Block::Single(allocate(count, per_system)?),
            Precision::Double => Block::Double(allocate(count, per_system)?),
        };
        let locks = (0..count).map(|_| SystemLock { mutex: Mutex::new(()), owner: AtomicU64::new(0) }).collect();
        Ok(Arc::new(EnsembleStore {
            id: NEXT_STREAM_ID.fetch_add(1, Ordering::Relaxed),
            system_size,
            count,
            block,
            locks,
            shared: options.shared,
            private_owner: AtomicU64::new(0),
        }))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Qubits per system.
    pub fn system_size(&self) -> usize {
        self.system_size
    }

    /// Number of systems.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn precision(&self) -> Precision {
        match self.block {
            Block::Single(_) => Precision::Single,
            Block::Double(_) => Precision::Double,
        }
    }

    /// Entries per system, `4^N`.
    pub fn entries_per_system(&self) -> usize {
        1 << (2 * self.system_size)
    }

    /// Total complex entries in the block, `S * 4^N`.
    pub fn block_len(&self) -> usize {
        match &self.block {
            Block::Single(b) => b.len(),
            Block::Double(b) => b.len(),
        }
    }

    /// Total bytes in the block, `S * 4^N * component size`.
    pub fn block_bytes(&self) -> usize {
        match &self.block {
            Block::Single(b) => std::mem::size_of_val::<[UnsafeCell<Complex<f32>>]>(b),
            Block::Double(b) => std::mem::size_of_val::<[UnsafeCell<Complex<f64>>]>(b),
        }
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.count {
            return Err(Error::Index(format!("system {index} out of range for stream of {}", self.count)));
        }
        Ok(())
    }

    /// Exclusive view of system `index`, aliasing the block (no copy).
    /// Blocks while another context holds the same system; fails if the
    /// calling context already holds it.
    pub fn system_at(&self, index: usize) -> Result<SystemView<'_>> {
        self.check_index(index)?;
        let me = context_id();
        if !self.shared {
            match self.private_owner.compare_exchange(0, me, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => {}
                Err(owner) if owner == me => {}
                Err(_) => return Err(Error::Usage(format!("stream {} is private to another context", self.id))),
            }
        }
        let lock = &self.locks[index];
        if lock.owner.load(Ordering::Acquire) == me {
            return Err(Error::ViewAlreadyHeld { system: index });
        }
        let guard = lock.mutex.lock();
        lock.owner.store(me, Ordering::Release);

        let per = self.entries_per_system();
        let span = index * per..(index + 1) * per;
        // SAFETY: `guard` gives this view exclusive access to the span until
        // it is dropped; UnsafeCell<T> has the layout of T.
        let entries = unsafe {
            match &self.block {
                Block::Single(b) => {
                    let cells = &b[span];
                    EntriesMut::Single(std::slice::from_raw_parts_mut(UnsafeCell::raw_get(cells.as_ptr()), per))
                }
                Block::Double(b) => {
                    let cells = &b[span];
                    EntriesMut::Double(std::slice::from_raw_parts_mut(UnsafeCell::raw_get(cells.as_ptr()), per))
                }
            }
        };
        Ok(SystemView { lock, index, state: StateMut::new(self.system_size, entries), _guard: guard })
    }

    pub fn system(self: &Arc<Self>, index: usize) -> Result<SystemRef> {
        self.check_index(index)?;
        Ok(SystemRef { store: self.clone(), index })
    }

    pub fn qubit(self: &Arc<Self>, system: usize, qubit: usize) -> Result<QubitRef> {
        self.system(system)?.qubit(qubit)
    }

    /// Fresh cursor over all systems in order.
    pub fn iter(self: &Arc<Self>) -> StreamCursor {
        StreamCursor::new(self.clone())
    }

    /// Copies system `index` out of the block.
    pub fn snapshot(&self, index: usize) -> Result<DensityState> {
        Ok(self.system_at(index)?.as_ref().to_owned())
    }

    /// Sum over systems of `|tr ρ_i - 1|`.
    pub fn total_trace_defect(&self) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.count {
            total += (self.system_at(i)?.as_ref().trace() - crate::linalg::ONE).norm();
        }
        Ok(total)
    }
}

/// Exclusive, aliasing view of one system inside an [`EnsembleStore`].
pub struct SystemView<'a> {
    lock: &'a SystemLock,
    index: usize,
    state: StateMut<'a>,
    _guard: MutexGuard<'a, ()>,
}

impl<'a> SystemView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn as_ref(&self) -> StateRef<'_> {
        self.state.as_ref()
    }
}

impl<'a> Deref for SystemView<'a> {
    type Target = StateMut<'a>;

    fn deref(&self) -> &Self::Target {
        &self.state
    }
}

impl<'a> DerefMut for SystemView<'a> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.state
    }
}

impl Drop for SystemView<'_> {
    fn drop(&mut self) {
        self.lock.owner.store(0, Ordering::Release);
    }
}

impl fmt::Debug for SystemView<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemView").field("index", &self.index).finish()
    }
}

/// Handle naming one system of a stream. Owns no state.
#[derive(Clone)]
pub struct SystemRef {
    store: Arc<EnsembleStore>,
    index: usize,
}

impl SystemRef {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_qubits(&self) -> usize {
        self.store.system_size
    }

    pub fn store(&self) -> &Arc<EnsembleStore> {
        &self.store
    }

    pub fn qubit(&self, qubit: usize) -> Result<QubitRef> {
        if qubit >= self.store.system_size {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {}-qubit system",
                self.store.system_size
            )));
        }
        Ok(QubitRef { store: self.store.clone(), system: self.index, qubit })
    }

    /// All qubits of the system, in index order.
    pub fn qubits(&self) -> Vec<QubitRef> {
        (0..self.store.system_size)
            .map(|q| QubitRef { store: self.store.clone(), system: self.index, qubit: q })
            .collect()
    }

    pub fn lock(&self) -> Result<SystemView<'_>> {
        self.store.system_at(self.index)
    }

    /// Runs `f` with exclusive access to the system's matrix.
    pub fn with_state<R>(&self, f: impl FnOnce(&mut StateMut<'_>) -> R) -> Result<R> {
        let mut view = self.lock()?;
        Ok(f(&mut view))
    }

    pub fn snapshot(&self) -> Result<DensityState> {
        self.store.snapshot(self.index)
    }
}

impl fmt::Debug for SystemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SystemRef(stream {}, system {})", self.store.id, self.index)
    }
}

/// Lightweight name of one qubit: stream, system index, qubit index.
#[derive(Clone)]
pub struct QubitRef {
    store: Arc<EnsembleStore>,
    system: usize,
    qubit: usize,
}

impl QubitRef {
    pub fn stream_id(&self) -> u64 {
        self.store.id
    }

    pub fn system_index(&self) -> usize {
        self.system
    }

    pub fn qubit(&self) -> usize {
        self.qubit
    }

    pub fn system_size(&self) -> usize {
        self.store.system_size
    }

    pub fn system(&self) -> SystemRef {
        SystemRef { store: self.store.clone(), index: self.system }
    }

    pub fn same_system(&self, other: &QubitRef) -> bool {
        self.store.id == other.store.id && self.system == other.system
    }

    /// Measures in the computational basis, collapsing the parent system.
    pub fn measure_outcome<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MeasurementOutcome> {
        self.system().with_state(|s| s.measure_qubit(self.qubit, rng))?
    }

    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u8> {
        Ok(self.measure_outcome(rng)?.bit)
    }
}

impl PartialEq for QubitRef {
    fn eq(&self, other: &Self) -> bool {
        self.same_system(other) && self.qubit == other.qubit
    }
}

impl Eq for QubitRef {}

impl Hash for QubitRef {
    fn hash<H: Hasher>(&self, state: &mut H) {
        (self.store.id, self.system, self.qubit).hash(state);
    }
}

impl fmt::Debug for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QubitRef({}:{}:{})", self.store.id, self.system, self.qubit)
    }
}

/// Callback receiving `(consumed, total)` after each yielded system.
pub type ProgressHook = Box<dyn FnMut(usize, usize) + Send>;

/// Independent in-order cursor over a stream's systems.
pub struct StreamCursor {
    store: Arc<EnsembleStore>,
    next: usize,
    progress: Option<ProgressHook>,
}

impl StreamCursor {
    pub fn new(store: Arc<EnsembleStore>) -> Self {
        StreamCursor { store, next: 0, progress: None }
    }

    pub fn with_progress(mut self, hook: ProgressHook) -> Self {
        self.progress = Some(hook);
        self
    }

    /// Index of the next system to be yielded.
    pub fn position(&self) -> usize {
        self.next
    }

    pub fn reset(&mut self) {
        self.next = 0;
    }
}

impl Iterator for StreamCursor {
    type Item = SystemRef;

    fn next(&mut self) -> Option<SystemRef> {
        if self.next >= self.store.count {
            return None;
        }
        let item = SystemRef { store: self.store.clone(), index: self.next };
        self.next += 1;
        if let Some(hook) = self.progress.as_mut() {
            hook(self.next, self.store.count);
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.store.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for StreamCursor {}

impl fmt::Debug for StreamCursor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamCursor").field("stream", &self.store.id).field("next", &self.next).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ONE, ZERO};

    #[test]
    fn new_stream_initialises_every_system() {
        let s = EnsembleStore::new(2, 3, Precision::Double).unwrap();
        assert_eq!(s.len(), 3);
        for i in 0..3 {
            let v = s.system_at(i).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    assert_eq!(v.get(r, c), if r == 0 && c == 0 { ONE } else { ZERO });
                }
            }
        }
    }

    #[test]
    fn block_sizes_are_closed_form() {
        let s = EnsembleStore::new(2, 5, Precision::Single).unwrap();
        assert_eq!(s.block_len(), 5 * 16);
        assert_eq!(s.block_bytes(), 5 * 16 * 8);
        let s = EnsembleStore::new(9, 1, Precision::Double).unwrap();
        assert_eq!(s.block_bytes(), 262_144 * 16);
        let s = EnsembleStore::new(9, 1, Precision::Single).unwrap();
        assert_eq!(s.block_bytes(), 2_097_152);
    }

    #[test]
    fn views_alias_the_block() {
        let s = EnsembleStore::new(1, 2, Precision::Double).unwrap();
        {
            let mut v = s.system_at(1).unwrap();
            v.set(0, 1, C64::new(0.25, -0.5));
        }
        assert_eq!(s.system_at(1).unwrap().get(0, 1), C64::new(0.25, -0.5));
        assert_eq!(s.system_at(0).unwrap().get(0, 1), ZERO);
        assert!(matches!(s.system_at(2), Err(Error::Index(_))));
    }

    #[test]
    fn nested_view_of_same_system_is_refused() {
        let s = EnsembleStore::new(1, 2, Precision::Double).unwrap();
        let _held = s.system_at(0).unwrap();
        assert!(matches!(s.system_at(0), Err(Error::ViewAlreadyHeld { system: 0 })));
        assert!(s.system_at(1).is_ok());
    }

    #[test]
    fn cursor_yields_in_order_then_stops() {
        let s = EnsembleStore::new(1, 3, Precision::Double).unwrap();
        let mut cursor = s.iter();
        let idx: Vec<usize> = cursor.by_ref().map(|sys| sys.index()).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert!(cursor.next().is_none());
        cursor.reset();
        assert_eq!(cursor.next().map(|s| s.index()), Some(0));
    }

    #[test]
    fn qubit_refs_compare_by_location() {
        let s = EnsembleStore::new(2, 2, Precision::Double).unwrap();
        let a = s.qubit(1, 0).unwrap();
        let b = s.system(1).unwrap().qubits().remove(0);
        assert_eq!(a, b);
        assert_ne!(a, s.qubit(1, 1).unwrap());
        assert!(a.same_system(&s.qubit(1, 1).unwrap()));
        let other = EnsembleStore::new(2, 2, Precision::Double).unwrap();
        assert!(!a.same_system(&other.qubit(1, 0).unwrap()));
        assert!(matches!(s.qubit(0, 2), Err(Error::Index(_))));
    }

    #[test]
    fn private_stream_rejects_second_context() {
        let opts = StreamOptions { shared: false, ..Default::default() };
        let s = EnsembleStore::with_options(1, 1, opts).unwrap();
        drop(s.system_at(0).unwrap());
        let s2 = s.clone();
        let res = std::thread::spawn(move || s2.system_at(0).map(|_| ())).join().unwrap();
        assert!(matches!(res, Err(Error::Usage(_))));
    }
}
