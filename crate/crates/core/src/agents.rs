//! Network nodes: named actors with classical and quantum memory, a clock
//! and channel endpoints, running a user-supplied program.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crossbeam_channel::Sender;
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{
    conduit, quantum_conduit, ChannelModel, ConduitRx, ConduitTx, QuantumRx, QuantumTx, WaitFailure, WaitPolicy,
};
use crate::error::{Error, Result};
use crate::qstream::{EnsembleStore, QubitRef, StreamCursor};
use crate::simulation::ProgressEvent;
use crate::time::SimTime;

/// Default time charged per transmitted qubit or classical message.
pub const DEFAULT_PULSE_SECONDS: f64 = 1e-9;

/// Classical message or published result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Empty,
    Bits(Vec<u8>),
    Bytes(Vec<u8>),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<Payload>),
}

impl Payload {
    /// Number of classical bits carried, used for per-bit clock metering.
    pub fn bit_len(&self) -> usize {
        match self {
            Payload::Empty => 0,
            Payload::Bits(b) => b.len(),
            Payload::Bytes(b) => 8 * b.len(),
            Payload::Int(_) | Payload::Float(_) => 64,
            Payload::Text(s) => 8 * s.len(),
            Payload::List(items) => items.iter().map(Payload::bit_len).sum(),
        }
    }

    pub fn as_bits(&self) -> Option<&[u8]> {
        match self {
            Payload::Bits(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Payload]> {
        match self {
            Payload::List(items) => Some(items),
            _ => None,
        }
    }
}

impl From<Vec<u8>> for Payload {
    fn from(bits: Vec<u8>) -> Self {
        Payload::Bits(bits)
    }
}

/// Results published by agents, keyed by agent name.
#[derive(Clone, Debug, Default)]
pub struct OutputSink(Arc<Mutex<BTreeMap<String, Payload>>>);

impl OutputSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, agent: &str, payload: Payload) -> Result<()> {
        let mut map = self.0.lock();
        if map.contains_key(agent) {
            return Err(Error::Usage(format!("{agent} already published a result in this run")));
        }
        map.insert(agent.to_string(), payload);
        Ok(())
    }

    pub fn get(&self, agent: &str) -> Option<Payload> {
        self.0.lock().get(agent).cloned()
    }

    pub fn len(&self) -> usize {
        self.0.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contents(&self) -> BTreeMap<String, Payload> {
        self.0.lock().clone()
    }
}

/// Who currently has a qubit, as seen by holder tracking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Holding {
    Held(String),
    InFlight { from: String, to: String },
    Lost,
}

/// Debug-mode record of qubit holding. A qubit nobody has sent yet counts
/// as held by whichever agent first touches it.
#[derive(Clone, Debug, Default)]
pub struct HolderRegistry(Arc<Mutex<HashMap<QubitRef, Holding>>>);

impl HolderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn holding(&self, q: &QubitRef) -> Option<Holding> {
        self.0.lock().get(q).cloned()
    }

    fn depart(&self, q: &QubitRef, from: &str, to: &str) -> Result<()> {
        let mut map = self.0.lock();
        match map.get(q) {
            None => {}
            Some(Holding::Held(h)) if h == from => {}
            Some(other) => {
                return Err(Error::HolderViolation(format!("{from} sent {q:?} but it is {other:?}")));
            }
        }
        map.insert(q.clone(), Holding::InFlight { from: from.into(), to: to.into() });
        Ok(())
    }

    fn arrive(&self, q: Option<&QubitRef>, dropped: Option<&QubitRef>, to: &str) {
        let mut map = self.0.lock();
        if let Some(q) = q {
            map.insert(q.clone(), Holding::Held(to.into()));
        } else if let Some(s) = dropped {
            map.insert(s.clone(), Holding::Lost);
        }
    }
}

#[derive(Default)]
struct Endpoints {
    c_out: Option<ConduitTx<Payload>>,
    c_in: Option<ConduitRx<Payload>>,
    q_out: Option<QuantumTx>,
    q_in: Option<QuantumRx>,
}

/// Wall-clock wait bookkeeping shared by the agents of one run; lists who
/// is blocked on what when the deadlock watchdog fires.
pub(crate) type BlockBoard = Arc<Mutex<BTreeMap<String, String>>>;

pub type Program = Box<dyn FnOnce(&mut AgentRuntime) -> Result<()> + Send>;

/// A network node.
pub struct AgentRuntime {
    name: String,
    stream: Option<Arc<EnsembleStore>>,
    pub classical_memory: HashMap<String, Payload>,
    pub quantum_memory: Vec<QubitRef>,
    clock: SimTime,
    pulse: SimTime,
    per_bit_metering: bool,
    endpoints: BTreeMap<String, Endpoints>,
    rng: ChaCha8Rng,
    seed: u64,
    program: Option<Program>,
    pub(crate) sink: OutputSink,
    pub(crate) wait: WaitPolicy,
    pub(crate) board: BlockBoard,
    pub(crate) progress: Option<Sender<ProgressEvent>>,
    holders: Option<HolderRegistry>,
}

impl fmt::Debug for AgentRuntime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentRuntime")
            .field("name", &self.name)
            .field("clock", &self.clock)
            .field("peers", &self.endpoints.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// 256-bit seed derived from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

fn wait_error(
    failure: WaitFailure,
    agent: &str,
    peer: &str,
    kind: &'static str,
    wait: &WaitPolicy,
    board: &BlockBoard,
) -> Error {
    match failure {
        WaitFailure::Closed => Error::BrokenLink { agent: agent.into(), peer: peer.into(), kind },
        WaitFailure::Aborted => Error::Aborted,
        WaitFailure::TimedOut => {
            let mut blocked: Vec<String> = board.lock().iter().map(|(a, what)| format!("{a}: {what}")).collect();
            if blocked.is_empty() {
                blocked.push(format!("{agent}: {kind} from {peer}"));
            }
            Error::Deadlock { seconds: wait.watchdog.as_secs_f64(), blocked }
        }
    }
}

impl AgentRuntime {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        AgentRuntime {
            rng: ChaCha8Rng::from_seed(derive_seed(0, &name)),
            name,
            stream: None,
            classical_memory: HashMap::new(),
            quantum_memory: Vec::new(),
            clock: SimTime::ZERO,
            pulse: SimTime::from_secs(DEFAULT_PULSE_SECONDS),
            per_bit_metering: false,
            endpoints: BTreeMap::new(),
            seed: 0,
            program: None,
            sink: OutputSink::new(),
            wait: WaitPolicy::default(),
            board: BlockBoard::default(),
            progress: None,
            holders: None,
        }
    }

    pub fn with_stream(mut self, stream: Arc<EnsembleStore>) -> Self {
        self.stream = Some(stream);
        self
    }

    pub fn with_pulse_length(mut self, seconds: f64) -> Self {
        self.pulse = SimTime::from_secs(seconds);
        self
    }

    /// Charge `pulse_length` per classical bit instead of per message.
    pub fn with_per_bit_metering(mut self, on: bool) -> Self {
        self.per_bit_metering = on;
        self
    }

    pub fn with_holder_tracking(mut self, registry: HolderRegistry) -> Self {
        self.holders = Some(registry);
        self
    }

    pub fn with_program(mut self, program: impl FnOnce(&mut AgentRuntime) -> Result<()> + Send + 'static) -> Self {
        self.program = Some(Box::new(program));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn pulse_length(&self) -> SimTime {
        self.pulse
    }

    pub fn stream(&self) -> Result<&Arc<EnsembleStore>> {
        self.stream.as_ref().ok_or_else(|| Error::Usage(format!("{} has no quantum stream", self.name)))
    }

    /// Cursor over the agent's stream that reports progress to the run.
    pub fn systems(&self) -> Result<StreamCursor> {
        let cursor = self.stream()?.iter();
        Ok(match &self.progress {
            Some(tx) => {
                let tx = tx.clone();
                let agent = self.name.clone();
                cursor.with_progress(Box::new(move |done, total| {
                    let _ = tx.send(ProgressEvent { agent: agent.clone(), done, total });
                }))
            }
            None => cursor,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Generator dedicated to one system index, independent of how many
    /// draws the agent made before.
    pub fn system_rng(&self, system: usize) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(derive_seed(self.seed, &format!("{}#{system}", self.name)))
    }

    pub fn peers(&self) -> impl Iterator<Item = &str> {
        self.endpoints.keys().map(String::as_str)
    }

    pub fn has_quantum_link(&self, peer: &str) -> bool {
        self.endpoints.get(peer).is_some_and(|e| e.q_out.is_some())
    }

    pub fn has_classical_link(&self, peer: &str) -> bool {
        self.endpoints.get(peer).is_some_and(|e| e.c_out.is_some())
    }

    /// Qubits delivered as lost on the inbound link from `peer`.
    pub fn lost_from(&self, peer: &str) -> usize {
        self.endpoints.get(peer).and_then(|e| e.q_in.as_ref()).map_or(0, QuantumRx::lost)
    }

    pub fn total_lost(&self) -> usize {
        self.endpoints.values().filter_map(|e| e.q_in.as_ref()).map(QuantumRx::lost).sum()
    }

    fn check_link(&self, peer: &AgentRuntime, model: &ChannelModel, quantum: bool) -> Result<()> {
        if self.name == peer.name {
            return Err(Error::Configuration(format!("{} cannot be linked to itself", self.name)));
        }
        let exists = if quantum { self.has_quantum_link(&peer.name) } else { self.has_classical_link(&peer.name) };
        if exists {
            let kind = if quantum { "quantum" } else { "classical" };
            return Err(Error::Configuration(format!("duplicate {kind} link {} <-> {}", self.name, peer.name)));
        }
        model.validate()
    }

    /// Installs a pair of quantum conduits between `self` and `peer`.
    pub fn qconnect(&mut self, peer: &mut AgentRuntime, model: &ChannelModel) -> Result<()> {
        self.check_link(peer, model, true)?;
        let (ab_tx, ab_rx) = quantum_conduit(model);
        let (ba_tx, ba_rx) = quantum_conduit(model);
        let mine = self.endpoints.entry(peer.name.clone()).or_default();
        mine.q_out = Some(ab_tx);
        mine.q_in = Some(ba_rx);
        let theirs = peer.endpoints.entry(self.name.clone()).or_default();
        theirs.q_out = Some(ba_tx);
        theirs.q_in = Some(ab_rx);
        Ok(())
    }

    /// Installs a pair of classical conduits of the given length.
    pub fn cconnect(&mut self, peer: &mut AgentRuntime, length_km: f64) -> Result<()> {
        self.cconnect_with(peer, &ChannelModel::perfect().with_length(length_km))
    }

    /// As `cconnect`, taking length, signal speed and capacity from `model`.
    /// The model's error spec is ignored.
    pub fn cconnect_with(&mut self, peer: &mut AgentRuntime, model: &ChannelModel) -> Result<()> {
        self.check_link(peer, model, false)?;
        let (ab_tx, ab_rx) = conduit(model);
        let (ba_tx, ba_rx) = conduit(model);
        let mine = self.endpoints.entry(peer.name.clone()).or_default();
        mine.c_out = Some(ab_tx);
        mine.c_in = Some(ba_rx);
        let theirs = peer.endpoints.entry(self.name.clone()).or_default();
        theirs.c_out = Some(ba_tx);
        theirs.c_in = Some(ab_rx);
        Ok(())
    }

    fn routing(&self, kind: &'static str, peer: &str) -> Error {
        Error::Routing { kind, from: self.name.clone(), to: peer.into() }
    }

    fn advance(&mut self, by: SimTime) {
        let before = self.clock;
        self.clock += by;
        debug_assert!(self.clock >= before);
    }

    fn arrive_at(&mut self, at: SimTime) {
        self.clock = self.clock.max(at);
    }

    fn blocking<T>(&self, what: String, op: impl FnOnce() -> T) -> T {
        self.board.lock().insert(self.name.clone(), what);
        let out = op();
        self.board.lock().remove(&self.name);
        out
    }

    /// Sends `q` to `peer`, charging one pulse.
    pub fn qsend(&mut self, peer: &str, q: QubitRef) -> Result<()> {
        self.qsend_item(peer, Some(q))
    }

    /// Forwards a loss marker to `peer` in place of a qubit, charging one
    /// pulse. Used by relays that received `None`.
    pub fn qsend_lost(&mut self, peer: &str) -> Result<()> {
        self.qsend_item(peer, None)
    }

    fn qsend_item(&mut self, peer: &str, q: Option<QubitRef>) -> Result<()> {
        if !self.has_quantum_link(peer) {
            return Err(self.routing("quantum", peer));
        }
        if let (Some(reg), Some(q)) = (&self.holders, &q) {
            reg.depart(q, &self.name, peer)?;
        }
        self.advance(self.pulse);
        let emission = self.clock;
        let tx = self.endpoints[peer].q_out.as_ref().expect("checked above");
        self.blocking(format!("qsend to {peer}"), || tx.transmit(q, emission, &self.wait))
            .map_err(|f| wait_error(f, &self.name, peer, "quantum", &self.wait, &self.board))
    }

    /// Blocks for the next qubit from `peer`. `None` means the qubit was
    /// lost in transit.
    pub fn qrecv(&mut self, peer: &str) -> Result<Option<QubitRef>> {
        let name = self.name.clone();
        let wait = self.wait.clone();
        let board = self.board.clone();
        let rx = self.endpoints.get_mut(peer).and_then(|e| e.q_in.as_mut()).ok_or_else(|| Error::Routing {
            kind: "quantum",
            from: peer.into(),
            to: name.clone(),
        })?;
        board.lock().insert(name.clone(), format!("qrecv from {peer}"));
        let delivered = rx.deliver(&wait);
        board.lock().remove(&name);
        let dropped = rx.take_dropped();
        let (outcome, at) = delivered.map_err(|f| wait_error(f, &name, peer, "quantum", &wait, &board))?;
        self.arrive_at(at);
        let q = outcome?;
        if let Some(reg) = &self.holders {
            reg.arrive(q.as_ref(), dropped.as_ref(), &name);
        }
        Ok(q)
    }

    /// Sends a classical payload, charging one pulse per message (or per
    /// bit with metering on).
    pub fn csend(&mut self, peer: &str, payload: Payload) -> Result<()> {
        if !self.has_classical_link(peer) {
            return Err(self.routing("classical", peer));
        }
        let charge = if self.per_bit_metering {
            SimTime::from_femtos(self.pulse.femtos() * payload.bit_len() as u64)
        } else {
            self.pulse
        };
        self.advance(charge);
        let emission = self.clock;
        let tx = self.endpoints[peer].c_out.as_ref().expect("checked above");
        self.blocking(format!("csend to {peer}"), || tx.transmit(payload, emission, &self.wait))
            .map_err(|f| wait_error(f, &self.name, peer, "classical", &self.wait, &self.board))
    }

    /// Blocks for the next classical payload from `peer`.
    pub fn crecv(&mut self, peer: &str) -> Result<Payload> {
        let rx = self.endpoints.get(peer).and_then(|e| e.c_in.as_ref()).ok_or_else(|| Error::Routing {
            kind: "classical",
            from: peer.into(),
            to: self.name.clone(),
        })?;
        let (payload, at) = self
            .blocking(format!("crecv from {peer}"), || rx.deliver(&self.wait))
            .map_err(|f| wait_error(f, &self.name, peer, "classical", &self.wait, &self.board))?;
        self.arrive_at(at);
        Ok(payload)
    }

    /// Records this agent's result in the run's output sink.
    pub fn publish(&mut self, payload: Payload) -> Result<()> {
        self.sink.publish(&self.name, payload)
    }

    /// Reseeds the agent generator and the error models on its inbound
    /// quantum links from the run's master seed.
    pub(crate) fn reseed(&mut self, master: u64) {
        self.seed = master;
        self.rng = ChaCha8Rng::from_seed(derive_seed(master, &self.name));
        for (peer, ep) in &mut self.endpoints {
            if let Some(rx) = &mut ep.q_in {
                rx.reseed(derive_seed(master, &format!("{peer}->{}", self.name)));
            }
        }
    }

    pub(crate) fn take_program(&mut self) -> Option<Program> {
        self.program.take()
    }

    pub(crate) fn set_holders(&mut self, registry: HolderRegistry) {
        self.holders.get_or_insert(registry);
    }

    /// Peers this agent has endpoints for, with link kinds, for plan
    /// validation.
    pub(crate) fn link_kinds(&self) -> Vec<(String, bool, bool)> {
        self.endpoints.iter().map(|(p, e)| (p.clone(), e.c_out.is_some(), e.q_out.is_some())).collect()
    }

    /// Drops every endpoint so peers blocked on this agent observe a closed
    /// link.
    pub(crate) fn close(&mut self) {
        self.endpoints.clear();
        self.progress = None;
    }
}
