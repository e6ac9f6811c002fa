//! Runs a set of agents concurrently, one thread each, and gathers what
//! they publish.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use parking_lot::Mutex;
use serde::Serialize;

use crate::agents::{AgentRuntime, BlockBoard, HolderRegistry, OutputSink, Payload};
use crate::channels::WaitPolicy;
use crate::error::{Error, Result};
use crate::time::SimTime;

/// Default wall-clock limit on any single blocking channel operation.
pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(60);

/// An agent's stream cursor advanced to `done` of `total` systems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgressEvent {
    pub agent: String,
    pub done: usize,
    pub total: usize,
}

/// Final state of one agent after a successful run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentSummary {
    pub name: String,
    pub clock: SimTime,
    /// Qubits this agent received as lost.
    pub lost: usize,
    /// Last progress report as (done, total), if the agent iterated its
    /// stream.
    pub progress: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub outputs: BTreeMap<String, Payload>,
    pub agents: BTreeMap<String, AgentSummary>,
}

impl RunOutcome {
    pub fn output(&self, agent: &str) -> Option<&Payload> {
        self.outputs.get(agent)
    }

    pub fn clock(&self, agent: &str) -> Option<SimTime> {
        self.agents.get(agent).map(|a| a.clock)
    }
}

/// Agents plus run settings.
pub struct SimulationPlan {
    agents: Vec<AgentRuntime>,
    sink: OutputSink,
    seed: u64,
    progress: bool,
    writer: Option<Box<dyn Write + Send>>,
    watchdog: Duration,
    holders: Option<HolderRegistry>,
}

impl SimulationPlan {
    pub fn new(seed: u64) -> Self {
        SimulationPlan {
            agents: Vec::new(),
            sink: OutputSink::new(),
            seed,
            progress: false,
            writer: None,
            watchdog: DEFAULT_WATCHDOG,
            holders: None,
        }
    }

    pub fn agent(mut self, agent: AgentRuntime) -> Self {
        self.agents.push(agent);
        self
    }

    pub fn agents(mut self, agents: impl IntoIterator<Item = AgentRuntime>) -> Self {
        self.agents.extend(agents);
        self
    }

    /// Render per-agent progress lines to stderr.
    pub fn progress(mut self, on: bool) -> Self {
        self.progress = on;
        self
    }

    /// Render progress to `writer` instead of stderr; implies progress on.
    pub fn progress_to(mut self, writer: impl Write + Send + 'static) -> Self {
        self.progress = true;
        self.writer = Some(Box::new(writer));
        self
    }

    pub fn watchdog(mut self, limit: Duration) -> Self {
        self.watchdog = limit;
        self
    }

    /// Enables holder tracking on every agent.
    pub fn track_holders(mut self, registry: HolderRegistry) -> Self {
        self.holders = Some(registry);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sink(&self) -> &OutputSink {
        &self.sink
    }

    /// Names are unique and every link is installed on both ends.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if !names.insert(a.name()) {
                return Err(Error::Configuration(format!("duplicate agent name {}", a.name())));
            }
        }
        let links: BTreeMap<&str, Vec<(String, bool, bool)>> =
            self.agents.iter().map(|a| (a.name(), a.link_kinds())).collect();
        for (name, peers) in &links {
            for (peer, classical, quantum) in peers {
                let back = links
                    .get(peer.as_str())
                    .and_then(|p| p.iter().find(|(n, _, _)| n == name))
                    .map(|(_, c, q)| (*c, *q));
                if back != Some((*classical, *quantum)) {
                    return Err(Error::Configuration(format!(
                        "link {name} -> {peer} has no matching endpoint on {peer}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Runs every agent program to completion. The first failing agent
    /// aborts the whole run and its error is returned; partial results are
    /// discarded.
    pub fn run(mut self) -> Result<RunOutcome> {
        self.validate()?;
        let abort = Arc::new(AtomicBool::new(false));
        let wait = WaitPolicy { abort: abort.clone(), watchdog: self.watchdog };
        let board = BlockBoard::default();
        let failure: Arc<Mutex<Option<Error>>> = Arc::default();
        let (progress_tx, progress_rx) = crossbeam_channel::unbounded();

        let mut handles = Vec::with_capacity(self.agents.len());
        for mut agent in self.agents.drain(..) {
            agent.sink = self.sink.clone();
            agent.wait = wait.clone();
            agent.board = board.clone();
            agent.progress = Some(progress_tx.clone());
            agent.reseed(self.seed);
            if let Some(reg) = &self.holders {
                agent.set_holders(reg.clone());
            }
            let program = agent.take_program();
            let abort = abort.clone();
            let failure = failure.clone();
            let name = agent.name().to_string();
            let handle = thread::Builder::new()
                .name(name.clone())
                .spawn(move || {
                    let result = match program {
                        Some(p) => catch_unwind(AssertUnwindSafe(|| p(&mut agent))),
                        None => Ok(Ok(())),
                    };
                    let error = match result {
                        Ok(Ok(())) => None,
                        Ok(Err(e)) => Some(Error::AgentFailed { agent: agent.name().into(), source: Box::new(e) }),
                        Err(panic) => Some(Error::AgentPanicked {
                            agent: agent.name().into(),
                            message: panic_message(panic.as_ref()),
                        }),
                    };
                    // Raise the flag before closing endpoints so peers see an
                    // abort rather than a spurious broken link.
                    if let Some(e) = error {
                        if abort.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                            *failure.lock() = Some(e);
                        }
                    }
                    let summary = AgentSummary {
                        name: agent.name().into(),
                        clock: agent.clock(),
                        lost: agent.total_lost(),
                        progress: None,
                    };
                    agent.close();
                    summary
                })
                .map_err(|e| Error::Resource(format!("cannot spawn thread for {name}: {e}")))?;
            handles.push((name, handle));
        }
        drop(progress_tx);

        let mut counters: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut writer: Option<Box<dyn Write + Send>> = match (self.progress, self.writer.take()) {
            (false, _) => None,
            (true, Some(w)) => Some(w),
            (true, None) => Some(Box::new(std::io::stderr())),
        };
        for event in progress_rx.iter() {
            let previous = counters.insert(event.agent.clone(), (event.done, event.total));
            if let Some(w) = writer.as_mut() {
                if should_render(previous.map(|p| p.0), event.done, event.total) {
                    let _ = writeln!(w, "{} {}/{}", event.agent, event.done, event.total);
                }
            }
        }
        if let Some(w) = writer.as_mut() {
            let _ = w.flush();
        }

        let mut agents = BTreeMap::new();
        for (name, handle) in handles {
            match handle.join() {
                Ok(mut summary) => {
                    summary.progress = counters.get(&name).copied();
                    agents.insert(name, summary);
                }
                Err(panic) => {
                    let e = Error::AgentPanicked { agent: name, message: panic_message(panic.as_ref()) };
                    failure.lock().get_or_insert(e);
                }
            }
        }
        if let Some(e) = failure.lock().take() {
            return Err(e);
        }
        Ok(RunOutcome { outputs: self.sink.contents(), agents })
    }
}

/// Roughly ten lines per agent: each new tenth, plus the final count.
fn should_render(previous: Option<usize>, done: usize, total: usize) -> bool {
    if done == total {
        return true;
    }
    let step = (total / 10).max(1);
    previous.is_none_or(|p| p / step != done / step)
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ChannelModel;
    use crate::linalg::Precision;
    use crate::qstream::EnsembleStore;

    #[derive(Clone, Default)]
    struct SharedBuf(Arc<Mutex<Vec<u8>>>);

    impl Write for SharedBuf {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().extend_from_slice(buf);
            Ok(buf.len())
        }

        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn empty_plan() {
        let out = SimulationPlan::new(1).run().unwrap();
        assert!(out.outputs.is_empty() && out.agents.is_empty());
    }

    #[test]
    fn ping() {
        let mut alice = AgentRuntime::new("Alice").with_program(|a| {
            let bits = vec![1, 0, 1, 1];
            for &b in &bits {
                a.csend("Bob", Payload::Bits(vec![b]))?;
            }
            a.publish(Payload::Bits(bits))
        });
        let mut bob = AgentRuntime::new("Bob").with_program(|b| {
            let mut got = Vec::new();
            for _ in 0..4 {
                got.extend_from_slice(b.crecv("Alice")?.as_bits().unwrap());
            }
            b.publish(Payload::Bits(got))
        });
        alice.cconnect(&mut bob, 0.0).unwrap();
        let out = SimulationPlan::new(3).agent(alice).agent(bob).run().unwrap();
        assert_eq!(out.output("Alice"), out.output("Bob"));
        assert_eq!(out.clock("Alice"), Some(SimTime::from_secs(4e-9)));
    }

    #[test]
    fn failure_names_the_agent() {
        let mut alice = AgentRuntime::new("Alice").with_program(|_| Err(Error::Usage("boom".into())));
        let mut bob = AgentRuntime::new("Bob").with_program(|b| b.crecv("Alice").map(|_| ()));
        alice.cconnect(&mut bob, 0.0).unwrap();
        let err = SimulationPlan::new(0).agent(alice).agent(bob).run().unwrap_err();
        assert_eq!(err.failing_agent(), Some("Alice"));
    }

    #[test]
    fn panic_is_reported() {
        let alice = AgentRuntime::new("Alice").with_program(|_| panic!("kaput"));
        let err = SimulationPlan::new(0).agent(alice).run().unwrap_err();
        assert!(matches!(&err, Error::AgentPanicked { agent, message } if agent == "Alice" && message == "kaput"));
    }

    #[test]
    fn watchdog_reports_blocked_endpoints() {
        let mut alice = AgentRuntime::new("Alice").with_program(|a| a.crecv("Bob").map(|_| ()));
        let mut bob = AgentRuntime::new("Bob").with_program(|b| b.crecv("Alice").map(|_| ()));
        alice.cconnect(&mut bob, 0.0).unwrap();
        let err =
            SimulationPlan::new(0).agent(alice).agent(bob).watchdog(Duration::from_millis(200)).run().unwrap_err();
        match err {
            Error::AgentFailed { source, .. } => match *source {
                Error::Deadlock { blocked, .. } => assert!(!blocked.is_empty()),
                other => panic!("unexpected {other}"),
            },
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn validation() {
        let plan = SimulationPlan::new(0).agent(AgentRuntime::new("A")).agent(AgentRuntime::new("A"));
        assert!(matches!(plan.validate(), Err(Error::Configuration(_))));
        let mut a = AgentRuntime::new("A");
        let mut b = AgentRuntime::new("B");
        a.qconnect(&mut b, &ChannelModel::perfect()).unwrap();
        let plan = SimulationPlan::new(0).agent(a);
        assert!(matches!(plan.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn progress_counters() {
        let store = EnsembleStore::new(1, 10, Precision::Single).unwrap();
        let alice = AgentRuntime::new("Alice").with_stream(store.clone()).with_program(|a| {
            for sys in a.systems()? {
                crate::gates::x(&sys.qubit(0)?)?;
            }
            Ok(())
        });
        let bob = AgentRuntime::new("Bob").with_stream(store).with_program(|b| {
            b.systems()?.take(4).for_each(drop);
            Ok(())
        });
        let buf = SharedBuf::default();
        let out = SimulationPlan::new(0).agent(alice).agent(bob).progress_to(buf.clone()).run().unwrap();
        assert_eq!(out.agents["Alice"].progress, Some((10, 10)));
        assert_eq!(out.agents["Bob"].progress, Some((4, 10)));
        let text = String::from_utf8(buf.0.lock().clone()).unwrap();
        assert!(text.lines().any(|l| l == "Alice 10/10"));

        let quiet = SharedBuf::default();
        let alice = AgentRuntime::new("Alice")
            .with_stream(EnsembleStore::new(1, 3, Precision::Single).unwrap())
            .with_program(|a| {
                a.systems()?.for_each(drop);
                Ok(())
            });
        let plan = SimulationPlan::new(0).agent(alice).progress_to(quiet.clone()).progress(false);
        plan.run().unwrap();
        assert!(quiet.0.lock().is_empty());
    }
}
