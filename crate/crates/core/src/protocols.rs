//! The four reference workloads: teleportation, superdense coding, an
//! intercept-and-resend attack on superdense coding, and transmission
//! protected by the nine-qubit Shor code.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agents::{AgentRuntime, Payload};
use crate::channels::{
    ChannelModel, CorruptionLog, CorruptionRecord, CustomError, ErrorSpec, GroupCorruption, UnitarySampler,
    FIBER_DB_PER_KM, LIGHT_SPEED_KM_S,
};
use crate::error::{Error, Result};
use crate::gates::{self, apply_to_state, Gate, OperatorCache};
use crate::linalg::Precision;
use crate::qstate::StateMut;
use crate::qstream::{EnsembleStore, QubitRef, StreamOptions, SystemRef};
use crate::simulation::{RunOutcome, SimulationPlan, DEFAULT_WATCHDOG};

/// Where a bit stream came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    File,
    Text,
}

/// Ordered classical bits, each 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BitStream {
    bits: Vec<u8>,
    origin: Origin,
}

impl BitStream {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Configuration(format!("bit {pos} is {}, not 0 or 1", bits[pos])));
        }
        Ok(BitStream { bits, origin: Origin::Generated })
    }

    /// `len` uniformly random bits from `seed`.
    pub fn generated(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BitStream { bits: (0..len).map(|_| rng.gen_range(0..2u8)).collect(), origin: Origin::Generated }
    }

    /// Bytes expanded most significant bit first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let bits = bytes.iter().flat_map(|&byte| (0..8).rev().map(move |i| (byte >> i) & 1)).collect();
        BitStream { bits, origin: Origin::File }
    }

    pub fn from_text(text: &str) -> Self {
        BitStream { origin: Origin::Text, ..Self::from_bytes(text.as_bytes()) }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::from_bytes(&std::fs::read(path)?))
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Packs bits into bytes, most significant first; a ragged tail is
    /// padded with zeros.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)))).collect()
    }

    pub fn to_text_lossy(&self) -> String {
        String::from_utf8_lossy(&self.to_bytes()).into_owned()
    }

    fn pairs(&self) -> Result<Vec<(u8, u8)>> {
        if !self.bits.len().is_multiple_of(2) {
            return Err(Error::Configuration(format!("superdense coding needs an even bit count, got {}", self.len())));
        }
        Ok(self.bits.chunks(2).map(|p| (p[0], p[1])).collect())
    }

    /// Positions where `self` and `other` differ; length mismatch counts
    /// the surplus as differences.
    pub fn mismatches(&self, other: &BitStream) -> usize {
        let common = self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count();
        common + self.len().abs_diff(other.len())
    }
}

/// Settings shared by every demo.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub precision: Precision,
    pub pulse_seconds: f64,
    pub signal_speed_km_s: f64,
    pub progress: bool,
    pub watchdog: Duration,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            precision: Precision::Double,
            pulse_seconds: crate::agents::DEFAULT_PULSE_SECONDS,
            signal_speed_km_s: LIGHT_SPEED_KM_S,
            progress: false,
            watchdog: DEFAULT_WATCHDOG,
        }
    }
}

impl RunSettings {
    fn agent(&self, name: &str, stream: &Arc<EnsembleStore>) -> AgentRuntime {
        AgentRuntime::new(name).with_stream(stream.clone()).with_pulse_length(self.pulse_seconds)
    }

    fn fiber(&self, length_km: f64, db_per_km: f64) -> ChannelModel {
        let model = ChannelModel::perfect().with_length(length_km).with_signal_speed(self.signal_speed_km_s);
        if db_per_km > 0.0 {
            model.with_error(ErrorSpec::Attenuation { db_per_km })
        } else {
            model
        }
    }

    fn stream(&self, system_size: usize, count: usize) -> Result<Arc<EnsembleStore>> {
        EnsembleStore::with_options(
            system_size,
            count,
            StreamOptions { precision: self.precision, ..Default::default() },
        )
    }

    fn plan(&self, seed: u64) -> SimulationPlan {
        SimulationPlan::new(seed).progress(self.progress).watchdog(self.watchdog)
    }

    fn validate(&self) -> Result<()> {
        if !(self.pulse_seconds >= 0.0) || !self.pulse_seconds.is_finite() {
            return Err(Error::Configuration(format!("pulse length must be >= 0 s, got {}", self.pulse_seconds)));
        }
        ChannelModel::perfect().with_signal_speed(self.signal_speed_km_s).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentReport {
    pub clock_s: f64,
    pub lost: usize,
}

/// Run summary: outputs, final clocks and error counters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub demo: String,
    pub seed: u64,
    pub agents: BTreeMap<String, AgentReport>,
    pub lost_qubits: usize,
    pub corrupted_groups: usize,
    pub outputs: BTreeMap<String, Payload>,
}

impl ProtocolReport {
    fn new(demo: &str, seed: u64, outcome: &RunOutcome, corrupted_groups: usize) -> Self {
        let agents: BTreeMap<String, AgentReport> = outcome
            .agents
            .iter()
            .map(|(n, a)| (n.clone(), AgentReport { clock_s: a.clock.as_secs(), lost: a.lost }))
            .collect();
        ProtocolReport {
            demo: demo.into(),
            seed,
            lost_qubits: agents.values().map(|a| a.lost).sum(),
            agents,
            corrupted_groups,
            outputs: outcome.outputs.clone(),
        }
    }
}

fn published_bits(outcome: &RunOutcome, agent: &str) -> Result<Vec<u8>> {
    outcome
        .output(agent)
        .and_then(Payload::as_bits)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| Error::Usage(format!("{agent} did not publish a bit list")))
}

fn lost(agent: &str, peer: &str) -> Error {
    Error::Usage(format!("{agent} lost a qubit from {peer} on a link without loss"))
}

// ---------------------------------------------------------------- teleportation

/// `θ = kπ/4` for `k = 0..=8`.
pub fn standard_angles() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * PI / 4.0).collect()
}

#[derive(Clone, Debug)]
pub struct TeleportationConfig {
    pub angles: Vec<f64>,
    /// Optional `R_Z` phase per angle applied after `R_X`; empty means none.
    pub phases: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
    pub length_km: f64,
    pub settings: RunSettings,
}

impl Default for TeleportationConfig {
    fn default() -> Self {
        TeleportationConfig {
            angles: standard_angles(),
            phases: Vec::new(),
            ensemble: 250,
            seed: 0,
            length_km: 0.0,
            settings: RunSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeleportationRow {
    pub theta: f64,
    pub expected: f64,
    pub observed: f64,
    pub ones: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeleportationResult {
    pub rows: Vec<TeleportationRow>,
    pub report: ProtocolReport,
}

/// Teleports `R_X(θ)|0>` from Alice to Bob `ensemble` times per angle and
/// reports the fraction of 1 outcomes Bob observes.
pub fn run_teleportation(cfg: &TeleportationConfig) -> Result<TeleportationResult> {
    if cfg.ensemble == 0 {
        return Err(Error::Configuration("ensemble size must be at least 1".into()));
    }
    cfg.settings.validate()?;
    if !cfg.phases.is_empty() && cfg.phases.len() != cfg.angles.len() {
        return Err(Error::Configuration(format!("{} phases for {} angles", cfg.phases.len(), cfg.angles.len())));
    }
    let angles = Arc::new(cfg.angles.clone());
    let phases = cfg.phases.clone();
    let per_angle = cfg.ensemble;
    let stream = cfg.settings.stream(3, angles.len() * per_angle)?;
    let link = cfg.settings.fiber(cfg.length_km, 0.0);

    let sent_angles = angles.clone();
    let mut alice = cfg.settings.agent("Alice", &stream).with_program(move |a| {
        for (k, sys) in a.systems()?.enumerate() {
            let theta = sent_angles[k / per_angle];
            let q = sys.qubits();
            gates::rx(&q[0], theta)?;
            if let Some(&phi) = phases.get(k / per_angle) {
                gates::rz(&q[0], phi)?;
            }
            gates::h(&q[1])?;
            gates::cnot(&q[1], &q[2])?;
            a.qsend("Bob", q[2].clone())?;
            gates::cnot(&q[0], &q[1])?;
            gates::h(&q[0])?;
            let m_psi = q[0].measure(a.rng())?;
            let m_anc = q[1].measure(a.rng())?;
            a.csend("Bob", Payload::Bits(vec![m_psi, m_anc]))?;
        }
        Ok(())
    });
    let mut bob = cfg.settings.agent("Bob", &stream).with_program(move |b| {
        let mut outcomes = Vec::new();
        for _ in b.systems()? {
            let q = b.qrecv("Alice")?.ok_or_else(|| lost("Bob", "Alice"))?;
            let bits = b.crecv("Alice")?;
            let bits = bits
                .as_bits()
                .filter(|m| m.len() == 2)
                .ok_or_else(|| Error::Usage("malformed correction bits".into()))?;
            if bits[1] == 1 {
                gates::x(&q)?;
            }
            if bits[0] == 1 {
                gates::z(&q)?;
            }
            outcomes.push(q.measure(b.rng())?);
        }
        b.publish(Payload::Bits(outcomes))
    });
    alice.qconnect(&mut bob, &link)?;
    alice.cconnect_with(&mut bob, &link)?;

    let outcome = cfg.settings.plan(cfg.seed).agent(alice).agent(bob).run()?;
    let outcomes = published_bits(&outcome, "Bob")?;
    let rows = angles
        .iter()
        .zip(outcomes.chunks(per_angle))
        .map(|(&theta, chunk)| {
            let ones = chunk.iter().filter(|&&b| b == 1).count();
            TeleportationRow {
                theta,
                expected: (theta / 2.0).sin().powi(2),
                observed: ones as f64 / per_angle as f64,
                ones,
                trials: per_angle,
            }
        })
        .collect();
    Ok(TeleportationResult { rows, report: ProtocolReport::new("teleportation", cfg.seed, &outcome, 0) })
}

// ------------------------------------------------------------------ superdense

#[derive(Clone, Debug)]
pub struct SuperdenseConfig {
    pub data: BitStream,
    /// Alice-Bob distance; Charlie sits at the midpoint.
    pub length_km: f64,
    pub db_per_km: f64,
    pub seed: u64,
    pub settings: RunSettings,
}

impl SuperdenseConfig {
    pub fn new(data: BitStream) -> Self {
        SuperdenseConfig { data, length_km: 1.0, db_per_km: FIBER_DB_PER_KM, seed: 0, settings: RunSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperdenseResult {
    pub received: BitStream,
    pub report: ProtocolReport,
}

#[derive(Clone, Debug)]
pub struct InterceptionConfig {
    pub data: BitStream,
    pub length_km: f64,
    pub db_per_km: f64,
    pub seed: u64,
    pub settings: RunSettings,
}

impl InterceptionConfig {
    pub fn new(data: BitStream) -> Self {
        InterceptionConfig { data, length_km: 1.0, db_per_km: 0.0, seed: 0, settings: RunSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterceptionResult {
    /// One bit per intercepted qubit.
    pub eve: BitStream,
    pub bob: BitStream,
    pub report: ProtocolReport,
}

fn charlie(settings: &RunSettings, stream: &Arc<EnsembleStore>) -> AgentRuntime {
    settings.agent("Charlie", stream).with_program(|c| {
        for sys in c.systems()? {
            let q = sys.qubits();
            gates::h(&q[0])?;
            gates::cnot(&q[0], &q[1])?;
            c.qsend("Alice", q[0].clone())?;
            c.qsend("Bob", q[1].clone())?;
        }
        Ok(())
    })
}

fn superdense_sender(
    settings: &RunSettings,
    stream: &Arc<EnsembleStore>,
    data: &BitStream,
    to: &'static str,
) -> Result<AgentRuntime> {
    let pairs = data.pairs()?;
    let bits = data.bits().to_vec();
    Ok(settings.agent("Alice", stream).with_program(move |a| {
        for &(b1, b2) in &pairs {
            match a.qrecv("Charlie")? {
                Some(q) => {
                    if b1 == 1 {
                        gates::z(&q)?;
                    }
                    if b2 == 1 {
                        gates::x(&q)?;
                    }
                    a.qsend(to, q)?;
                }
                None => a.qsend_lost(to)?,
            }
        }
        a.publish(Payload::Bits(bits))
    }))
}

fn superdense_receiver(settings: &RunSettings, stream: &Arc<EnsembleStore>, from: &'static str) -> AgentRuntime {
    settings.agent("Bob", stream).with_program(move |b| {
        let mut bits = Vec::new();
        for _ in b.systems()? {
            let mine = b.qrecv("Charlie")?;
            let theirs = b.qrecv(from)?;
            match (theirs, mine) {
                (Some(qa), Some(qb)) => {
                    gates::cnot(&qa, &qb)?;
                    gates::h(&qa)?;
                    bits.push(qa.measure(b.rng())?);
                    bits.push(qb.measure(b.rng())?);
                }
                _ => bits.extend([0, 0]),
            }
        }
        b.publish(Payload::Bits(bits))
    })
}

/// Sends `data` two bits per qubit. Lost qubits decode as `(0, 0)`.
pub fn run_superdense(cfg: &SuperdenseConfig) -> Result<SuperdenseResult> {
    cfg.settings.validate()?;
    let stream = cfg.settings.stream(2, cfg.data.len() / 2)?;
    let half = cfg.settings.fiber(cfg.length_km / 2.0, cfg.db_per_km);
    let full = cfg.settings.fiber(cfg.length_km, cfg.db_per_km);
    let mut charlie = charlie(&cfg.settings, &stream);
    let mut alice = superdense_sender(&cfg.settings, &stream, &cfg.data, "Bob")?;
    let mut bob = superdense_receiver(&cfg.settings, &stream, "Alice");
    charlie.qconnect(&mut alice, &half)?;
    charlie.qconnect(&mut bob, &half)?;
    alice.qconnect(&mut bob, &full)?;

    let outcome = cfg.settings.plan(cfg.seed).agents([charlie, alice, bob]).run()?;
    let received = BitStream::from_bits(published_bits(&outcome, "Bob")?)?;
    Ok(SuperdenseResult { received, report: ProtocolReport::new("superdense", cfg.seed, &outcome, 0) })
}

/// Superdense coding with Eve measuring and resending every qubit on the
/// Alice-Bob hop.
pub fn run_interception(cfg: &InterceptionConfig) -> Result<InterceptionResult> {
    cfg.settings.validate()?;
    let stream = cfg.settings.stream(2, cfg.data.len() / 2)?;
    let half = cfg.settings.fiber(cfg.length_km / 2.0, cfg.db_per_km);
    let mut charlie = charlie(&cfg.settings, &stream);
    let mut alice = superdense_sender(&cfg.settings, &stream, &cfg.data, "Eve")?;
    let mut bob = superdense_receiver(&cfg.settings, &stream, "Eve");
    let mut eve = cfg.settings.agent("Eve", &stream).with_program(|e| {
        let mut bits = Vec::new();
        for _ in e.systems()? {
            match e.qrecv("Alice")? {
                Some(q) => {
                    bits.push(q.measure(e.rng())?);
                    e.qsend("Bob", q)?;
                }
                None => {
                    bits.push(0);
                    e.qsend_lost("Bob")?;
                }
            }
        }
        e.publish(Payload::Bits(bits))
    });
    charlie.qconnect(&mut alice, &half)?;
    charlie.qconnect(&mut bob, &half)?;
    alice.qconnect(&mut eve, &half)?;
    eve.qconnect(&mut bob, &half)?;

    let outcome = cfg.settings.plan(cfg.seed).agents([charlie, alice, eve, bob]).run()?;
    Ok(InterceptionResult {
        eve: BitStream::from_bits(published_bits(&outcome, "Eve")?)?,
        bob: BitStream::from_bits(published_bits(&outcome, "Bob")?)?,
        report: ProtocolReport::new("interception", cfg.seed, &outcome, 0),
    })
}

// ------------------------------------------------------------------- shor code

/// Encoder gates on positions 0..9, payload on qubit 0.
pub fn shor_encoder_circuit() -> Vec<(Gate, Vec<usize>)> {
    let mut ops = vec![(Gate::Cnot, vec![0, 3]), (Gate::Cnot, vec![0, 6])];
    ops.extend([0, 3, 6].map(|h| (Gate::H, vec![h])));
    for h in [0, 3, 6] {
        ops.push((Gate::Cnot, vec![h, h + 1]));
        ops.push((Gate::Cnot, vec![h, h + 2]));
    }
    ops
}

/// Decoder gates: bit-flip correction per triple, then phase-flip
/// correction across the triple heads. Qubit 0 ends in the logical state.
pub fn shor_decoder_circuit() -> Vec<(Gate, Vec<usize>)> {
    let mut ops = Vec::new();
    for h in [0, 3, 6] {
        ops.push((Gate::Cnot, vec![h, h + 1]));
        ops.push((Gate::Cnot, vec![h, h + 2]));
        ops.push((Gate::Toffoli, vec![h + 1, h + 2, h]));
    }
    ops.extend([0, 3, 6].map(|h| (Gate::H, vec![h])));
    ops.push((Gate::Cnot, vec![0, 3]));
    ops.push((Gate::Cnot, vec![0, 6]));
    ops.push((Gate::Toffoli, vec![3, 6, 0]));
    ops
}

fn apply_circuit(state: &mut StateMut<'_>, circuit: &[(Gate, Vec<usize>)], cache: &OperatorCache) -> Result<()> {
    if state.n_qubits() != 9 {
        return Err(Error::shape("9-qubit system", format!("{}-qubit system", state.n_qubits())));
    }
    for (gate, targets) in circuit {
        apply_to_state(state, gate, targets, cache)?;
    }
    Ok(())
}

/// Encodes qubit 0 of a 9-qubit state into the Shor code; qubits 1..9 must
/// start in |0>.
pub fn shor_encode(state: &mut StateMut<'_>) -> Result<()> {
    apply_circuit(state, &shor_encoder_circuit(), OperatorCache::global())
}

/// Inverse of [`shor_encode`] with single-error correction.
pub fn shor_decode(state: &mut StateMut<'_>) -> Result<()> {
    apply_circuit(state, &shor_decoder_circuit(), OperatorCache::global())
}

fn on_system(system: &SystemRef, f: impl FnOnce(&mut StateMut<'_>) -> Result<()>) -> Result<()> {
    system.with_state(f)?
}

#[derive(Clone, Debug)]
pub struct ShorConfig {
    pub message: BitStream,
    pub seed: u64,
    /// Probability that a group of nine is corrupted at all.
    pub p_error: f64,
    pub sampler: UnitarySampler,
    pub settings: RunSettings,
}

impl ShorConfig {
    pub fn new(message: BitStream) -> Self {
        ShorConfig { message, seed: 0, p_error: 1.0, sampler: UnitarySampler::Haar, settings: RunSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShorResult {
    pub protected: BitStream,
    pub unprotected: BitStream,
    /// Corruptions applied on the encoded link.
    pub protected_log: Vec<CorruptionRecord>,
    /// Corruptions applied on the unencoded link.
    pub unprotected_log: Vec<CorruptionRecord>,
    pub report: ProtocolReport,
}

fn corrupting_link(cfg: &ShorConfig, log: &CorruptionLog) -> ChannelModel {
    let (p, sampler, log) = (cfg.p_error, cfg.sampler.clone(), log.clone());
    let factory =
        CustomError(Arc::new(move || Box::new(GroupCorruption::new(9, p, sampler.clone()).with_log(log.clone()))));
    ChannelModel::perfect().with_signal_speed(cfg.settings.signal_speed_km_s).with_error(ErrorSpec::Custom(factory))
}

fn nine_from(agent: &mut AgentRuntime, peer: &str) -> Result<Vec<QubitRef>> {
    (0..9).map(|_| agent.qrecv(peer)?.ok_or_else(|| lost(agent.name(), peer))).collect()
}

/// Sends `message` twice through channels that corrupt one qubit of every
/// group of nine: once Shor-encoded (Alice to Bob) and once bare (DumbAlice
/// to DumbBob).
pub fn run_shor_demo(cfg: &ShorConfig) -> Result<ShorResult> {
    cfg.settings.validate()?;
    if !(0.0..=1.0).contains(&cfg.p_error) {
        return Err(Error::Configuration(format!("error probability must lie in [0, 1], got {}", cfg.p_error)));
    }
    let n = cfg.message.len();
    let encoded = cfg.settings.stream(9, n)?;
    let bare = cfg.settings.stream(9, n)?;
    let bits = Arc::new(cfg.message.bits().to_vec());

    let send_bits = bits.clone();
    let mut alice = cfg.settings.agent("Alice", &encoded).with_program(move |a| {
        for (sys, &bit) in a.systems()?.zip(send_bits.iter()) {
            on_system(&sys, |s| {
                if bit == 1 {
                    apply_to_state(s, &Gate::X, &[0], OperatorCache::global())?;
                }
                shor_encode(s)
            })?;
            for q in sys.qubits() {
                a.qsend("Bob", q)?;
            }
        }
        Ok(())
    });
    let mut bob = cfg.settings.agent("Bob", &encoded).with_program(|b| {
        let mut out = Vec::new();
        for _ in b.systems()? {
            let q = nine_from(b, "Alice")?;
            on_system(&q[0].system(), shor_decode)?;
            out.push(q[0].measure(b.rng())?);
        }
        b.publish(Payload::Bits(out))
    });
    let mut dumb_alice = cfg.settings.agent("DumbAlice", &bare).with_program(move |a| {
        for (sys, &bit) in a.systems()?.zip(bits.iter()) {
            if bit == 1 {
                gates::x(&sys.qubit(0)?)?;
            }
            for q in sys.qubits() {
                a.qsend("DumbBob", q)?;
            }
        }
        Ok(())
    });
    let mut dumb_bob = cfg.settings.agent("DumbBob", &bare).with_program(|b| {
        let mut out = Vec::new();
        for _ in b.systems()? {
            let q = nine_from(b, "DumbAlice")?;
            out.push(q[0].measure(b.rng())?);
        }
        b.publish(Payload::Bits(out))
    });

    let protected_log = CorruptionLog::default();
    let unprotected_log = CorruptionLog::default();
    alice.qconnect(&mut bob, &corrupting_link(cfg, &protected_log))?;
    dumb_alice.qconnect(&mut dumb_bob, &corrupting_link(cfg, &unprotected_log))?;

    let outcome = cfg.settings.plan(cfg.seed).agents([alice, bob, dumb_alice, dumb_bob]).run()?;
    let protected_log = protected_log.lock().clone();
    let unprotected_log = unprotected_log.lock().clone();
    let corrupted = protected_log.len() + unprotected_log.len();
    Ok(ShorResult {
        protected: BitStream::from_bits(published_bits(&outcome, "Bob")?)?,
        unprotected: BitStream::from_bits(published_bits(&outcome, "DumbBob")?)?,
        protected_log,
        unprotected_log,
        report: ProtocolReport::new("shor", cfg.seed, &outcome, corrupted),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::Matrix2c;
    use crate::linalg::{C64, ONE, ZERO};
    use crate::qstate::DensityState;

    #[test]
    fn bitstream_conversions() {
        let s = BitStream::from_text("Hi");
        assert_eq!(s.len(), 16);
        assert_eq!(&s.bits()[..8], &[0, 1, 0, 0, 1, 0, 0, 0]);
        assert_eq!(s.to_text_lossy(), "Hi");
        assert!(BitStream::from_bits(vec![0, 2]).is_err());
        assert_eq!(BitStream::generated(32, 4), BitStream::generated(32, 4));
        assert_eq!(s.mismatches(&BitStream::from_text("Hj")), 2);
        assert!(BitStream::from_bits(vec![1]).unwrap().pairs().is_err());
    }

    fn encoded_oracle(sign: f64) -> Vec<C64> {
        // ((|000> + sign |111>)/√2)^⊗3 by explicit construction
        let block = |i: usize| match i {
            0 => 1.0,
            7 => sign,
            _ => 0.0,
        };
        let norm = 0.5f64.sqrt().powi(3);
        (0..512).map(|k| C64::new(block(k >> 6) * block((k >> 3) & 7) * block(k & 7) * norm, 0.0)).collect()
    }

    #[test]
    fn encoder_matches_explicit_codewords() {
        for (bit, sign) in [(0u8, 1.0), (1u8, -1.0)] {
            let mut s = DensityState::new(9, Precision::Double).unwrap();
            if bit == 1 {
                apply_to_state(&mut s.as_mut(), &Gate::X, &[0], OperatorCache::global()).unwrap();
            }
            shor_encode(&mut s.as_mut()).unwrap();
            let expected = DensityState::from_pure(&encoded_oracle(sign), Precision::Double).unwrap();
            assert!(crate::qstate::max_abs_diff(&s.to_dense(), &expected.to_dense()) < 1e-12);
        }
    }

    #[test]
    fn sigma_z_on_qubit_four_is_corrected() {
        let mut s = DensityState::new(9, Precision::Double).unwrap();
        apply_to_state(&mut s.as_mut(), &Gate::Ry(1.1), &[0], OperatorCache::global()).unwrap();
        let reference = s.partial_trace(&[0]).unwrap();
        shor_encode(&mut s.as_mut()).unwrap();
        apply_to_state(&mut s.as_mut(), &Gate::Z, &[4], OperatorCache::global()).unwrap();
        shor_decode(&mut s.as_mut()).unwrap();
        assert!(crate::qstate::max_abs_diff(&s.partial_trace(&[0]).unwrap().to_dense(), &reference.to_dense()) < 1e-12);
    }

    #[test]
    fn small_shor_run_with_identity_corruption() {
        let mut cfg = ShorConfig::new(BitStream::from_bits(vec![1, 0, 1]).unwrap());
        cfg.sampler = UnitarySampler::Fixed(Matrix2c::identity());
        let r = run_shor_demo(&cfg).unwrap();
        assert_eq!(r.protected, cfg.message);
        assert_eq!(r.unprotected, cfg.message);
        assert_eq!(r.protected_log.len(), 3);
        assert_eq!(r.report.corrupted_groups, 6);
    }

    #[test]
    fn bit_flip_on_qubit_zero_breaks_only_the_bare_path() {
        let mut cfg = ShorConfig::new(BitStream::from_bits(vec![0, 1, 1, 0, 1, 0, 0, 1, 1]).unwrap());
        cfg.sampler = UnitarySampler::Fixed(Matrix2c::new(ZERO, ONE, ONE, ZERO));
        cfg.seed = 11;
        let r = run_shor_demo(&cfg).unwrap();
        assert_eq!(r.protected, cfg.message);
        let hits = r.unprotected_log.iter().filter(|c| c.position == 0).count();
        assert_eq!(r.unprotected.mismatches(&cfg.message), hits);
    }

    #[test]
    fn noiseless_superdense_and_teleportation_edges() {
        let data = BitStream::from_bits(vec![0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
        let cfg = SuperdenseConfig { db_per_km: 0.0, ..SuperdenseConfig::new(data.clone()) };
        assert_eq!(run_superdense(&cfg).unwrap().received, data);

        let cfg = TeleportationConfig { angles: vec![0.0, PI], ensemble: 20, ..Default::default() };
        let rows = run_teleportation(&cfg).unwrap().rows;
        assert_eq!((rows[0].ones, rows[1].ones), (0, 20));
    }
}
