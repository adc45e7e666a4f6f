//! In-process stand-in for a message-passing library.
//!
//! [`spawn_ranks`] runs one OS thread per rank. Ranks talk only through
//! ordered point-to-point channels (one per ordered pair) and two collectives,
//! [`RankContext::barrier`] and [`RankContext::allreduce_sum`]. Reductions add
//! contributions in ascending rank order, so every rank gets the same bits.
//!
//! Under [`Progression::Deferred`] a non-blocking send only reaches its peer
//! once the sender calls [`RankContext::wait`] or [`RankContext::progress`];
//! waiting on a receive does not push the caller's own sends.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpmvError};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Progression {
    #[default]
    Immediate,
    Deferred,
}

#[derive(Debug, Clone, Copy)]
pub struct RuntimeConfig {
    pub progression: Progression,
    /// Longest a rank waits on a receive or collective before reporting a
    /// stall. `None` waits forever.
    pub timeout: Option<Duration>,
    /// Upper bound of a random sleep injected before every delivery and
    /// after every receive. Test-only stress knob.
    pub jitter: Option<(Duration, u64)>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            progression: Progression::Immediate,
            timeout: Some(Duration::from_secs(60)),
            jitter: None,
        }
    }
}

impl RuntimeConfig {
    pub fn with_progression(mut self, progression: Progression) -> Self {
        self.progression = progression;
        self
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    /// Sleeps up to `max` at message endpoints, seeded per rank from `seed`.
    pub fn with_jitter(mut self, max: Duration, seed: u64) -> Self {
        self.jitter = Some((max, seed));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Values(Vec<f64>),
    Indices(Vec<usize>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Values(v) => v.len(),
            Payload::Indices(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Completion token for a non-blocking send. Consumed by [`RankContext::wait`].
#[derive(Debug)]
#[must_use = "a send under deferred progression only moves when waited on"]
pub struct SendHandle {
    seq: u64,
}

struct Collective {
    generation: u64,
    arrived: usize,
    slots: Vec<f64>,
    result: f64,
}

struct Shared {
    size: usize,
    // senders[src][dst] / receivers[dst][src]
    senders: Vec<Vec<Sender<Payload>>>,
    receivers: Vec<Vec<Receiver<Payload>>>,
    collective: Mutex<Collective>,
    collective_cv: Condvar,
    aborted: AtomicBool,
    messages_sent: Vec<AtomicUsize>,
    values_sent: Vec<AtomicUsize>,
}

impl Shared {
    fn new(size: usize) -> Self {
        let mut senders: Vec<Vec<Sender<Payload>>> =
            (0..size).map(|_| Vec::with_capacity(size)).collect();
        let mut receivers: Vec<Vec<Option<Receiver<Payload>>>> = (0..size)
            .map(|_| (0..size).map(|_| None).collect())
            .collect();
        for (src, row) in senders.iter_mut().enumerate() {
            for dst_slots in receivers.iter_mut() {
                let (tx, rx) = unbounded();
                row.push(tx);
                dst_slots[src] = Some(rx);
            }
        }
        Self {
            size,
            senders,
            receivers: receivers
                .into_iter()
                .map(|row| row.into_iter().map(|r| r.expect("filled")).collect())
                .collect(),
            collective: Mutex::new(Collective {
                generation: 0,
                arrived: 0,
                slots: vec![0.0; size],
                result: 0.0,
            }),
            collective_cv: Condvar::new(),
            aborted: AtomicBool::new(false),
            messages_sent: (0..size).map(|_| AtomicUsize::new(0)).collect(),
            values_sent: (0..size).map(|_| AtomicUsize::new(0)).collect(),
        }
    }
}

/// One rank's view of the runtime. Endpoints are meant for one context at a
/// time per rank; the type is `Sync` so a dedicated thread may borrow it.
pub struct RankContext<'a> {
    rank: usize,
    shared: &'a Shared,
    config: RuntimeConfig,
    outbox: Mutex<VecDeque<(u64, usize, Payload)>>,
    next_seq: AtomicU64,
    jitter: Option<(Duration, Mutex<ChaCha8Rng>)>,
}

impl<'a> RankContext<'a> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    pub fn progression(&self) -> Progression {
        self.config.progression
    }

    /// Messages this rank has handed to the runtime so far.
    pub fn messages_sent(&self) -> usize {
        self.shared.messages_sent[self.rank].load(Ordering::Relaxed)
    }

    /// Payload elements this rank has handed to the runtime so far.
    pub fn values_sent(&self) -> usize {
        self.shared.values_sent[self.rank].load(Ordering::Relaxed)
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer == self.rank {
            return Err(SpmvError::SelfSend { rank: self.rank });
        }
        if peer >= self.shared.size {
            return Err(SpmvError::RankOutOfRange {
                rank: peer,
                ranks: self.shared.size,
            });
        }
        Ok(())
    }

    fn jitter(&self) {
        if let Some((max, rng)) = &self.jitter {
            let micros = rng
                .lock()
                .expect("jitter rng")
                .random_range(0..=max.as_micros() as u64);
            thread::sleep(Duration::from_micros(micros));
        }
    }

    fn deliver(&self, peer: usize, payload: Payload) -> Result<()> {
        self.jitter();
        self.shared.senders[self.rank][peer]
            .send(payload)
            .map_err(|_| SpmvError::Disconnected {
                rank: self.rank,
                peer,
            })
    }

    /// Starts a send to `peer`. Messages between a fixed pair arrive in send
    /// order.
    pub fn send_nb(&self, peer: usize, payload: Payload) -> Result<SendHandle> {
        self.check_peer(peer)?;
        let seq = self.next_seq.fetch_add(1, Ordering::Relaxed);
        self.shared.messages_sent[self.rank].fetch_add(1, Ordering::Relaxed);
        self.shared.values_sent[self.rank].fetch_add(payload.len(), Ordering::Relaxed);
        match self.config.progression {
            Progression::Immediate => self.deliver(peer, payload)?,
            Progression::Deferred => self
                .outbox
                .lock()
                .expect("outbox poisoned")
                .push_back((seq, peer, payload)),
        }
        Ok(SendHandle { seq })
    }

    /// Completes a send. Under deferred progression this pushes every queued
    /// send up to and including the handle's.
    pub fn wait(&self, handle: SendHandle) -> Result<()> {
        let mut outbox = self.outbox.lock().expect("outbox poisoned");
        while outbox.front().is_some_and(|(seq, _, _)| *seq <= handle.seq) {
            let (_, peer, payload) = outbox.pop_front().expect("checked non-empty");
            self.deliver(peer, payload)?;
        }
        Ok(())
    }

    /// Pushes every queued send to its peer.
    pub fn progress(&self) -> Result<()> {
        let mut outbox = self.outbox.lock().expect("outbox poisoned");
        while let Some((_, peer, payload)) = outbox.pop_front() {
            self.deliver(peer, payload)?;
        }
        Ok(())
    }

    /// Blocks until the next message from `peer` arrives.
    pub fn recv_wait(&self, peer: usize) -> Result<Payload> {
        self.check_peer(peer)?;
        let rx = &self.shared.receivers[self.rank][peer];
        let deadline = self.config.timeout.map(|t| Instant::now() + t);
        loop {
            let slice = match deadline {
                Some(d) => d.saturating_duration_since(Instant::now()).min(POLL),
                None => POLL,
            };
            match rx.recv_timeout(slice) {
                Ok(p) => {
                    self.jitter();
                    return Ok(p);
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SpmvError::Disconnected {
                        rank: self.rank,
                        peer,
                    })
                }
                Err(RecvTimeoutError::Timeout) => {
                    if self.shared.aborted.load(Ordering::Acquire) {
                        return Err(SpmvError::PeerFailed { rank: self.rank });
                    }
                    if deadline.is_some_and(|d| Instant::now() >= d) {
                        return Err(SpmvError::Stalled {
                            rank: self.rank,
                            peer: Some(peer),
                            op: "recv",
                        });
                    }
                }
            }
        }
    }

    pub fn recv_values(&self, peer: usize) -> Result<Vec<f64>> {
        match self.recv_wait(peer)? {
            Payload::Values(v) => Ok(v),
            Payload::Indices(_) => Err(SpmvError::UnexpectedPayload {
                rank: self.rank,
                peer,
                expected: "values",
            }),
        }
    }

    pub fn recv_indices(&self, peer: usize) -> Result<Vec<usize>> {
        match self.recv_wait(peer)? {
            Payload::Indices(v) => Ok(v),
            Payload::Values(_) => Err(SpmvError::UnexpectedPayload {
                rank: self.rank,
                peer,
                expected: "indices",
            }),
        }
    }

    fn collective(&self, value: f64, op: &'static str) -> Result<f64> {
        let shared = self.shared;
        let mut st = shared.collective.lock().expect("collective poisoned");
        let generation = st.generation;
        st.slots[self.rank] = value;
        st.arrived += 1;
        if st.arrived == shared.size {
            let mut acc = st.slots[0];
            for &v in &st.slots[1..] {
                acc += v;
            }
            st.result = acc;
            st.arrived = 0;
            st.generation += 1;
            shared.collective_cv.notify_all();
            return Ok(acc);
        }
        let deadline = self.config.timeout.map(|t| Instant::now() + t);
        while st.generation == generation {
            if shared.aborted.load(Ordering::Acquire) {
                return Err(SpmvError::PeerFailed { rank: self.rank });
            }
            let slice = match deadline {
                Some(d) => {
                    let left = d.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Err(SpmvError::Stalled {
                            rank: self.rank,
                            peer: None,
                            op,
                        });
                    }
                    left.min(POLL)
                }
                None => POLL,
            };
            st = shared
                .collective_cv
                .wait_timeout(st, slice)
                .expect("collective poisoned")
                .0;
        }
        Ok(st.result)
    }

    /// Returns once every rank has entered.
    pub fn barrier(&self) -> Result<()> {
        self.collective(0.0, "barrier").map(|_| ())
    }

    /// Sum over ranks, added in ascending rank order.
    pub fn allreduce_sum(&self, value: f64) -> Result<f64> {
        self.collective(value, "allreduce")
    }
}

/// Runs `program` on `ranks` concurrent rank contexts and returns the
/// per-rank results in rank order.
///
/// When a rank fails, the others are told to stop waiting on messages and
/// collectives; once all have finished, the failures are reported together.
/// Ranks that only stopped because of another's failure are left out of the
/// report.
pub fn spawn_ranks<T, F>(ranks: usize, config: RuntimeConfig, program: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RankContext<'_>) -> Result<T> + Sync,
{
    if ranks == 0 {
        return Err(SpmvError::Config("need at least one rank".into()));
    }
    let shared = Shared::new(ranks);
    let shared = &shared;
    let program = &program;

    let outcomes: Vec<thread::Result<Result<T>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..ranks)
            .map(|rank| {
                s.spawn(move || {
                    let ctx = RankContext {
                        rank,
                        shared,
                        config,
                        outbox: Mutex::new(VecDeque::new()),
                        next_seq: AtomicU64::new(0),
                        jitter: config.jitter.map(|(max, seed)| {
                            (
                                max,
                                Mutex::new(ChaCha8Rng::seed_from_u64(
                                    seed ^ (rank as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                                )),
                            )
                        }),
                    };
                    let out = program(&ctx);
                    if out.is_err() {
                        shared.aborted.store(true, Ordering::Release);
                        shared.collective_cv.notify_all();
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect()
    });

    let mut results = Vec::with_capacity(ranks);
    let mut failures = Vec::new();
    let mut knock_on = Vec::new();
    for (rank, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(Ok(v)) => results.push(v),
            Ok(Err(e @ SpmvError::PeerFailed { .. })) => knock_on.push((rank, e)),
            Ok(Err(e)) => failures.push((rank, e)),
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
    if failures.is_empty() {
        failures = knock_on;
    }
    if !failures.is_empty() {
        return Err(SpmvError::RankFailures(failures));
    }
    Ok(results)
}
