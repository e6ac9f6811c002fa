//! Timed FIFO conduits between agents and the quantum error models applied
//! to qubits as they are delivered.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError, SendTimeoutError, Sender};
use num_complex::Complex64;
use parking_lot::Mutex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::Matrix2c;
use crate::qstream::QubitRef;
use crate::time::SimTime;

/// Default signal speed: vacuum light speed in km/s.
pub const LIGHT_SPEED_KM_S: f64 = 2.998e5;

/// Fiber attenuation used by the superdense and interception demos.
pub const FIBER_DB_PER_KM: f64 = 0.16;

/// Per-qubit loss probability of a fiber of `length_km` with attenuation
/// `db_per_km`: `1 - 10^(-α L / 10)`.
pub fn drop_probability(db_per_km: f64, length_km: f64) -> f64 {
    1.0 - 10f64.powf(-db_per_km * length_km / 10.0)
}

/// Source of the unitaries applied by corrupting error models.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum UnitarySampler {
    #[default]
    Haar,
    /// Always the given unitary; lets tests force a specific corruption.
    Fixed(Matrix2c),
}

impl UnitarySampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix2c {
        match self {
            UnitarySampler::Haar => haar_unitary(rng),
            UnitarySampler::Fixed(u) => *u,
        }
    }
}

/// Haar-distributed element of U(2): Gram-Schmidt on a complex Gaussian
/// matrix. Gram-Schmidt leaves a positive real diagonal in R, which is the
/// phase correction that makes Q Haar rather than merely unitary.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> Matrix2c {
    let mut g = || Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let (a, c, b, d) = (g(), g(), g(), g());
    let n1 = (a.norm_sqr() + c.norm_sqr()).sqrt();
    let (q00, q10) = (a / n1, c / n1);
    let proj = q00.conj() * b + q10.conj() * d;
    let (r0, r1) = (b - proj * q00, d - proj * q10);
    let n2 = (r0.norm_sqr() + r1.norm_sqr()).sqrt();
    Matrix2c::new(q00, r0 / n2, q10, r1 / n2)
}

/// One corruption applied to a group of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionRecord {
    pub system: usize,
    /// Position within the group that was hit.
    pub position: usize,
    pub unitary: Matrix2c,
}

impl CorruptionRecord {
    /// Probability that the corruption flips a computational-basis state.
    pub fn flip_weight(&self) -> f64 {
        self.unitary[(1, 0)].norm_sqr()
    }

    /// True when the unitary mixes |0> and |1> (not diagonal up to 1e-12).
    pub fn is_off_diagonal(&self) -> bool {
        self.unitary[(0, 1)].norm() > 1e-12 || self.unitary[(1, 0)].norm() > 1e-12
    }
}

/// Shared log of corruption events, readable after a run.
pub type CorruptionLog = Arc<Mutex<Vec<CorruptionRecord>>>;

/// Picks one of the nine qubits uniformly, applies a sampled unitary to it,
/// and reports what was done.
pub fn random_single_qubit_corruption<R: Rng + ?Sized>(
    group: &[QubitRef],
    rng: &mut R,
    sampler: &UnitarySampler,
) -> Result<CorruptionRecord> {
    if group.len() != 9 {
        return Err(Error::Usage(format!("corruption groups hold 9 qubits, got {}", group.len())));
    }
    if group.iter().any(|q| !q.same_system(&group[0])) {
        return Err(Error::CrossSystem);
    }
    let position = rng.gen_range(0..9);
    let unitary = sampler.sample(rng);
    apply_single_qubit_unitary(&group[position], &unitary)?;
    Ok(CorruptionRecord { system: group[0].system_index(), position, unitary })
}

/// Applies a 2x2 unitary to one qubit.
pub fn apply_single_qubit_unitary(qubit: &QubitRef, u: &Matrix2c) -> Result<()> {
    let n = qubit.system_size();
    let op = crate::gates::padded(u, qubit.qubit(), n);
    qubit.system().with_state(|s| s.apply_operator(&op))?
}

/// Error model applied to each qubit as it leaves a quantum conduit.
///
/// Returning `Ok(None)` reports the qubit as lost; the underlying state is
/// left untouched in that case.
pub trait QuantumError: Send {
    fn apply(&mut self, qubit: QubitRef, length_km: f64, rng: &mut dyn RngCore) -> Result<Option<QubitRef>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoError;

impl QuantumError for NoError {
    fn apply(&mut self, qubit: QubitRef, _: f64, _: &mut dyn RngCore) -> Result<Option<QubitRef>> {
        Ok(Some(qubit))
    }
}

/// Fiber loss: drops the qubit with probability `1 - 10^(-α L / 10)`.
#[derive(Clone, Copy, Debug)]
pub struct Attenuation {
    pub db_per_km: f64,
}

impl QuantumError for Attenuation {
    fn apply(&mut self, qubit: QubitRef, length_km: f64, rng: &mut dyn RngCore) -> Result<Option<QubitRef>> {
        let p = drop_probability(self.db_per_km, length_km);
        if p > 0.0 && rng.gen::<f64>() < p {
            return Ok(None);
        }
        Ok(Some(qubit))
    }
}

/// With probability `p_error`, applies a sampled unitary to the qubit.
#[derive(Clone, Debug)]
pub struct RandomUnitary {
    pub p_error: f64,
    pub sampler: UnitarySampler,
}

impl QuantumError for RandomUnitary {
    fn apply(&mut self, qubit: QubitRef, _: f64, rng: &mut dyn RngCore) -> Result<Option<QubitRef>> {
        if rng.gen::<f64>() < self.p_error {
            let u = self.sampler.sample(rng);
            apply_single_qubit_unitary(&qubit, &u)?;
        }
        Ok(Some(qubit))
    }
}

/// Corrupts exactly one qubit (chosen uniformly) of every consecutive group
/// of `group_size` arrivals, with probability `p_error` per group.
pub struct GroupCorruption {
    pub group_size: usize,
    pub p_error: f64,
    pub sampler: UnitarySampler,
    log: CorruptionLog,
    arrivals: usize,
    pending: Option<(usize, Matrix2c)>,
}

impl GroupCorruption {
    pub fn new(group_size: usize, p_error: f64, sampler: UnitarySampler) -> Self {
        GroupCorruption {
            group_size: group_size.max(1),
            p_error,
            sampler,
            log: CorruptionLog::default(),
            arrivals: 0,
            pending: None,
        }
    }

    pub fn with_log(mut self, log: CorruptionLog) -> Self {
        self.log = log;
        self
    }

    pub fn log(&self) -> CorruptionLog {
        self.log.clone()
    }
}

impl fmt::Debug for GroupCorruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupCorruption")
            .field("group_size", &self.group_size)
            .field("p_error", &self.p_error)
            .field("arrivals", &self.arrivals)
            .finish()
    }
}

impl QuantumError for GroupCorruption {
    fn apply(&mut self, qubit: QubitRef, _: f64, rng: &mut dyn RngCore) -> Result<Option<QubitRef>> {
        let position = self.arrivals % self.group_size;
        self.arrivals += 1;
        if position == 0 {
            self.pending = if rng.gen::<f64>() < self.p_error {
                let target = rng.gen_range(0..self.group_size);
                Some((target, self.sampler.sample(rng)))
            } else {
                None
            };
        }
        if let Some((target, u)) = self.pending {
            if target == position {
                apply_single_qubit_unitary(&qubit, &u)?;
                self.log.lock().push(CorruptionRecord { system: qubit.system_index(), position, unitary: u });
            }
        }
        Ok(Some(qubit))
    }
}

/// Applies several models in sequence; a loss short-circuits the rest.
pub struct Chain(pub Vec<Box<dyn QuantumError>>);

impl QuantumError for Chain {
    fn apply(&mut self, qubit: QubitRef, length_km: f64, rng: &mut dyn RngCore) -> Result<Option<QubitRef>> {
        let mut current = qubit;
        for model in &mut self.0 {
            match model.apply(current, length_km, rng)? {
                Some(q) => current = q,
                None => return Ok(None),
            }
        }
        Ok(Some(current))
    }
}

/// Factory for user-supplied error models; called once per conduit
/// direction.
#[derive(Clone)]
pub struct CustomError(pub Arc<dyn Fn() -> Box<dyn QuantumError> + Send + Sync>);

impl fmt::Debug for CustomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomError(..)")
    }
}

/// Declarative error model, as found in run-config files.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorSpec {
    #[default]
    None,
    Attenuation {
        db_per_km: f64,
    },
    RandomUnitary {
        p_error: f64,
    },
    GroupCorruption {
        #[serde(default = "nine")]
        group_size: usize,
        #[serde(default = "one")]
        p_error: f64,
    },
    #[serde(skip)]
    Custom(CustomError),
}

fn nine() -> usize {
    9
}

fn one() -> f64 {
    1.0
}

impl ErrorSpec {
    pub fn build(&self) -> Box<dyn QuantumError> {
        match self {
            ErrorSpec::None => Box::new(NoError),
            ErrorSpec::Attenuation { db_per_km } => Box::new(Attenuation { db_per_km: *db_per_km }),
            ErrorSpec::RandomUnitary { p_error } => {
                Box::new(RandomUnitary { p_error: *p_error, sampler: UnitarySampler::Haar })
            }
            ErrorSpec::GroupCorruption { group_size, p_error } => {
                Box::new(GroupCorruption::new(*group_size, *p_error, UnitarySampler::Haar))
            }
            ErrorSpec::Custom(factory) => (factory.0)(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        match *self {
            ErrorSpec::Attenuation { db_per_km } if !(db_per_km >= 0.0) || !db_per_km.is_finite() => {
                bad(format!("attenuation must be a finite non-negative dB/km, got {db_per_km}"))
            }
            ErrorSpec::RandomUnitary { p_error } | ErrorSpec::GroupCorruption { p_error, .. }
                if !(0.0..=1.0).contains(&p_error) =>
            {
                bad(format!("error probability must lie in [0, 1], got {p_error}"))
            }
            ErrorSpec::GroupCorruption { group_size: 0, .. } => bad("group size must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Physical description of a link.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub length_km: f64,
    pub signal_speed_km_s: f64,
    pub capacity: Option<usize>,
    pub error: ErrorSpec,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::perfect()
    }
}

impl ChannelModel {
    /// Zero length, no errors, unbounded.
    pub fn perfect() -> Self {
        ChannelModel { length_km: 0.0, signal_speed_km_s: LIGHT_SPEED_KM_S, capacity: None, error: ErrorSpec::None }
    }

    /// Lossy fiber with the given attenuation.
    pub fn fiber(db_per_km: f64) -> Self {
        ChannelModel { error: ErrorSpec::Attenuation { db_per_km }, ..Self::perfect() }
    }

    pub fn with_length(mut self, km: f64) -> Self {
        self.length_km = km;
        self
    }

    pub fn with_signal_speed(mut self, km_per_s: f64) -> Self {
        self.signal_speed_km_s = km_per_s;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_error(mut self, error: ErrorSpec) -> Self {
        self.error = error;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0) || !self.length_km.is_finite() {
            return Err(Error::Configuration(format!("channel length must be >= 0 km, got {}", self.length_km)));
        }
        if !(self.signal_speed_km_s > 0.0) || !self.signal_speed_km_s.is_finite() {
            return Err(Error::Configuration(format!(
                "signal speed must be positive, got {} km/s",
                self.signal_speed_km_s
            )));
        }
        if self.capacity == Some(0) {
            return Err(Error::Configuration("channel capacity must be positive".into()));
        }
        self.error.validate()
    }

    /// Propagation delay `L / v`, rounded up to the femtosecond.
    pub fn delay(&self) -> SimTime {
        SimTime::from_secs_ceil(self.length_km / self.signal_speed_km_s)
    }
}

/// Lets blocking conduit operations give up when the run is aborted or the
/// deadlock watchdog expires.
#[derive(Clone, Debug)]
pub struct WaitPolicy {
    pub abort: Arc<AtomicBool>,
    pub watchdog: Duration,
}

impl Default for WaitPolicy {
    fn default() -> Self {
        WaitPolicy { abort: Arc::new(AtomicBool::new(false)), watchdog: Duration::from_secs(60) }
    }
}

const POLL: Duration = Duration::from_millis(20);

/// Why a blocking conduit operation did not complete.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaitFailure {
    Closed,
    Aborted,
    TimedOut,
}

#[derive(Debug)]
struct Envelope<T> {
    item: T,
    emission: SimTime,
}

/// Sending end of a conduit.
#[derive(Debug)]
pub struct ConduitTx<T> {
    tx: Sender<Envelope<T>>,
}

/// Receiving end of a conduit.
#[derive(Debug)]
pub struct ConduitRx<T> {
    rx: Receiver<Envelope<T>>,
    length_km: f64,
    delay: SimTime,
}

/// A one-directional FIFO conduit with the model's length and capacity.
pub fn conduit<T>(model: &ChannelModel) -> (ConduitTx<T>, ConduitRx<T>) {
    let (tx, rx) = match model.capacity {
        Some(cap) => crossbeam_channel::bounded(cap),
        None => crossbeam_channel::unbounded(),
    };
    (ConduitTx { tx }, ConduitRx { rx, length_km: model.length_km, delay: model.delay() })
}

impl<T> ConduitTx<T> {
    /// Enqueues `item` stamped with its emission time; blocks while a bounded
    /// conduit is full.
    pub fn transmit(&self, item: T, emission: SimTime, wait: &WaitPolicy) -> std::result::Result<(), WaitFailure> {
        let deadline = Instant::now() + wait.watchdog;
        let mut envelope = Envelope { item, emission };
        loop {
            if wait.abort.load(Ordering::Relaxed) {
                return Err(WaitFailure::Aborted);
            }
            match self.tx.send_timeout(envelope, POLL) {
                Ok(()) => return Ok(()),
                Err(SendTimeoutError::Disconnected(_)) => return Err(WaitFailure::Closed),
                Err(SendTimeoutError::Timeout(back)) => {
                    if Instant::now() >= deadline {
                        return Err(WaitFailure::TimedOut);
                    }
                    envelope = back;
                }
            }
        }
    }
}

impl<T> ConduitRx<T> {
    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    pub fn delay(&self) -> SimTime {
        self.delay
    }

    /// Blocks until an item is available; returns it with its arrival time
    /// `emission + L / v`.
    pub fn deliver(&self, wait: &WaitPolicy) -> std::result::Result<(T, SimTime), WaitFailure> {
        let deadline = Instant::now() + wait.watchdog;
        loop {
            if wait.abort.load(Ordering::Relaxed) {
                return Err(WaitFailure::Aborted);
            }
            match self.rx.recv_timeout(POLL) {
                Ok(env) => return Ok((env.item, env.emission + self.delay)),
                Err(RecvTimeoutError::Disconnected) => return Err(WaitFailure::Closed),
                Err(RecvTimeoutError::Timeout) => {
                    if Instant::now() >= deadline {
                        return Err(WaitFailure::TimedOut);
                    }
                }
            }
        }
    }

    pub fn pending(&self) -> usize {
        self.rx.len()
    }
}

/// Receiving end of a quantum conduit together with its error model.
pub struct QuantumRx {
    inner: ConduitRx<Option<QubitRef>>,
    error: Box<dyn QuantumError>,
    rng: ChaCha8Rng,
    lost: usize,
    delivered: usize,
    dropped: Option<QubitRef>,
}

impl fmt::Debug for QuantumRx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumRx").field("lost", &self.lost).field("delivered", &self.delivered).finish()
    }
}

pub type QuantumTx = ConduitTx<Option<QubitRef>>;

/// Quantum conduit; `None` items are placeholders for already-lost qubits.
pub fn quantum_conduit(model: &ChannelModel) -> (QuantumTx, QuantumRx) {
    let (tx, inner) = conduit(model);
    let rx = QuantumRx {
        inner,
        error: model.error.build(),
        rng: ChaCha8Rng::seed_from_u64(0),
        lost: 0,
        delivered: 0,
        dropped: None,
    };
    (tx, rx)
}

impl QuantumRx {
    pub fn with_error(mut self, error: Box<dyn QuantumError>) -> Self {
        self.error = error;
        self
    }

    pub fn reseed(&mut self, seed: [u8; 32]) {
        self.rng = ChaCha8Rng::from_seed(seed);
    }

    /// Delivers the next item, passing a present qubit through the error
    /// model exactly once.
    pub fn deliver(
        &mut self,
        wait: &WaitPolicy,
    ) -> std::result::Result<(Result<Option<QubitRef>>, SimTime), WaitFailure> {
        let (item, at) = self.inner.deliver(wait)?;
        self.delivered += 1;
        let out = match item {
            Some(q) => {
                let out = self.error.apply(q.clone(), self.inner.length_km, &mut self.rng);
                if matches!(out, Ok(None)) {
                    self.dropped = Some(q);
                }
                out
            }
            None => Ok(None),
        };
        if matches!(out, Ok(None)) {
            self.lost += 1;
        }
        Ok((out, at))
    }

    /// The qubit most recently dropped by this link's error model.
    pub fn take_dropped(&mut self) -> Option<QubitRef> {
        self.dropped.take()
    }

    /// Items delivered as lost (dropped here or upstream).
    pub fn lost(&self) -> usize {
        self.lost
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn delay(&self) -> SimTime {
        self.inner.delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Precision, ONE, ZERO};
    use crate::qstream::EnsembleStore;

    #[test]
    fn drop_probability_values() {
        assert_eq!(drop_probability(0.16, 0.0), 0.0);
        assert!((drop_probability(0.16, 1.0) - 0.036_170_976_376).abs() < 1e-10);
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = haar_unitary(&mut rng);
            let defect = (u * u.adjoint() - Matrix2c::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(defect < 1e-12);
        }
    }

    #[test]
    fn fifo_and_delay() {
        let model = ChannelModel::perfect().with_length(1.0);
        let (tx, rx) = conduit::<u32>(&model);
        let wait = WaitPolicy::default();
        for i in 0..5 {
            tx.transmit(i, SimTime::from_secs(i as f64 * 1e-9), &wait).unwrap();
        }
        for i in 0..5 {
            let (item, at) = rx.deliver(&wait).unwrap();
            assert_eq!(item, i);
            assert!(at.as_secs() >= i as f64 * 1e-9 + 1.0 / LIGHT_SPEED_KM_S);
        }
        assert!((rx.delay().as_secs() - 3.3356e-6).abs() < 1e-9);
        drop(tx);
        assert_eq!(rx.deliver(&wait).unwrap_err(), WaitFailure::Closed);
    }

    #[test]
    fn zero_length_has_no_delay() {
        let (tx, rx) = conduit::<()>(&ChannelModel::perfect());
        let t = SimTime::from_secs(5e-9);
        tx.transmit((), t, &WaitPolicy::default()).unwrap();
        assert_eq!(rx.deliver(&WaitPolicy::default()).unwrap().1, t);
    }

    #[test]
    fn aborted_wait_returns() {
        let (_tx, rx) = conduit::<()>(&ChannelModel::perfect());
        let wait = WaitPolicy::default();
        wait.abort.store(true, Ordering::Relaxed);
        assert_eq!(rx.deliver(&wait).unwrap_err(), WaitFailure::Aborted);
        let quick = WaitPolicy { watchdog: Duration::from_millis(30), ..Default::default() };
        assert_eq!(rx.deliver(&quick).unwrap_err(), WaitFailure::TimedOut);
    }

    #[test]
    fn bounded_conduit_blocks_when_full() {
        let (tx, _rx) = conduit::<u8>(&ChannelModel::perfect().with_capacity(1));
        let quick = WaitPolicy { watchdog: Duration::from_millis(30), ..Default::default() };
        tx.transmit(1, SimTime::ZERO, &quick).unwrap();
        assert_eq!(tx.transmit(2, SimTime::ZERO, &quick).unwrap_err(), WaitFailure::TimedOut);
    }

    #[test]
    fn none_model_is_identity() {
        let s = EnsembleStore::new(1, 1, Precision::Double).unwrap();
        let q = s.qubit(0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(NoError.apply(q.clone(), 10.0, &mut rng).unwrap(), Some(q));
    }

    #[test]
    fn loss_leaves_state_untouched() {
        let s = EnsembleStore::new(1, 1, Precision::Double).unwrap();
        let q = s.qubit(0, 0).unwrap();
        crate::gates::h(&q).unwrap();
        let before = s.snapshot(0).unwrap();
        let mut model = Attenuation { db_per_km: 1000.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(model.apply(q, 10.0, &mut rng).unwrap(), None);
        assert_eq!(s.snapshot(0).unwrap(), before);
    }

    #[test]
    fn fixed_identity_corruption_changes_nothing() {
        let s = EnsembleStore::new(9, 1, Precision::Double).unwrap();
        let group = s.system(0).unwrap().qubits();
        crate::gates::h(&group[0]).unwrap();
        let before = s.snapshot(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rec =
            random_single_qubit_corruption(&group, &mut rng, &UnitarySampler::Fixed(Matrix2c::identity())).unwrap();
        assert!(rec.position < 9);
        assert_eq!(s.snapshot(0).unwrap(), before);
        assert!(random_single_qubit_corruption(&group[..8], &mut rng, &UnitarySampler::Haar).is_err());
    }

    #[test]
    fn group_corruption_hits_one_per_group() {
        let s = EnsembleStore::new(9, 3, Precision::Single).unwrap();
        let x = Matrix2c::new(ZERO, ONE, ONE, ZERO);
        let mut model = GroupCorruption::new(9, 1.0, UnitarySampler::Fixed(x));
        let log = model.log();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for sys in 0..3 {
            for q in s.system(sys).unwrap().qubits() {
                model.apply(q, 0.0, &mut rng).unwrap();
            }
        }
        let log = log.lock();
        assert_eq!(log.len(), 3);
        for (i, rec) in log.iter().enumerate() {
            assert_eq!(rec.system, i);
            let p1 = s.snapshot(i).unwrap().probability_of_one(rec.position).unwrap();
            assert!((p1 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        assert!(ChannelModel::perfect().with_length(-1.0).validate().is_err());
        assert!(ChannelModel::perfect().with_signal_speed(0.0).validate().is_err());
        assert!(ChannelModel::perfect().with_capacity(0).validate().is_err());
        assert!(ChannelModel::fiber(-0.1).validate().is_err());
        assert!(ChannelModel::perfect().with_error(ErrorSpec::RandomUnitary { p_error: 1.5 }).validate().is_err());
        assert!(ChannelModel::fiber(FIBER_DB_PER_KM).with_length(1.0).validate().is_ok());
        let spec: ErrorSpec = toml::from_str("type = \"attenuation\"\ndb_per_km = 0.16").unwrap();
        assert!(matches!(spec, ErrorSpec::Attenuation { db_per_km } if db_per_km == 0.16));
        let spec: ErrorSpec = toml::from_str("type = \"group_corruption\"").unwrap();
        assert!(matches!(spec, ErrorSpec::GroupCorruption { group_size: 9, p_error } if p_error == 1.0));
    }
}
