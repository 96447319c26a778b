//! Deterministic discrete-event kernel.
//!
//! Events are delivered in `(deliver_at, seq)` order, where `seq` is a
//! monotone counter assigned at scheduling time. Equal timestamps are thus
//! processed first-in first-out, and a run is a pure function of the
//! scenario and the master seed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

pub type AgentId = u32;

/// Nanoseconds since session open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const NANOS_PER_SEC: u64 = 1_000_000_000;

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }
    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }
    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * Self::NANOS_PER_SEC)
    }
    pub const fn from_minutes(m: u64) -> Self {
        SimTime(m * 60 * Self::NANOS_PER_SEC)
    }
    pub const fn nanos(self) -> u64 {
        self.0
    }
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_SEC as f64
    }
    pub const fn plus_nanos(self, ns: u64) -> Self {
        SimTime(self.0.saturating_add(ns))
    }
    pub const fn saturating_sub_nanos(self, ns: u64) -> Self {
        SimTime(self.0.saturating_sub(ns))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    PastTime { at: SimTime, now: SimTime },
    #[error("agent {0} is not registered with the kernel")]
    UnknownAgent(AgentId),
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub deliver_at: SimTime,
    pub seq: u64,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub payload: P,
}

/// Handle returned by scheduling; can be used to cancel a pending event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(pub u64);

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the earliest (deliver_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.deliver_at, other.0.seq).cmp(&(self.0.deliver_at, self.0.seq))
    }
}

/// Optional extra delay added on top of the constant per-pair latency.
pub trait Jitter: Send {
    fn extra_ns(&mut self, from: AgentId, to: AgentId, now: SimTime) -> u64;
}

/// One-way message latency between agents.
pub struct LatencyModel {
    default_ns: u64,
    pairs: BTreeMap<(AgentId, AgentId), u64>,
    jitter: Option<Box<dyn Jitter>>,
}

impl fmt::Debug for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatencyModel")
            .field("default_ns", &self.default_ns)
            .field("pairs", &self.pairs)
            .field("jitter", &self.jitter.is_some())
            .finish()
    }
}

impl LatencyModel {
    pub const DEFAULT_NS: u64 = 50_000_000;

    pub fn constant(one_way_ns: u64) -> Self {
        LatencyModel { default_ns: one_way_ns, pairs: BTreeMap::new(), jitter: None }
    }

    /// Overrides the latency for a pair, in both directions.
    pub fn with_pair(mut self, a: AgentId, b: AgentId, one_way_ns: u64) -> Self {
        self.pairs.insert((a, b), one_way_ns);
        self.pairs.insert((b, a), one_way_ns);
        self
    }

    pub fn with_jitter(mut self, jitter: Box<dyn Jitter>) -> Self {
        self.jitter = Some(jitter);
        self
    }

    /// Constant part of the latency, without jitter.
    pub fn one_way_ns(&self, from: AgentId, to: AgentId) -> u64 {
        self.pairs.get(&(from, to)).copied().unwrap_or(self.default_ns)
    }

    fn sample_ns(&mut self, from: AgentId, to: AgentId, now: SimTime) -> u64 {
        let base = self.one_way_ns(from, to);
        match self.jitter.as_mut() {
            Some(j) => base + j.extra_ns(from, to, now),
            None => base,
        }
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::constant(Self::DEFAULT_NS)
    }
}

/// Receives events popped by [`Kernel::run_until`].
pub trait Handler<P> {
    fn handle(&mut self, kernel: &mut Kernel<P>, event: Event<P>);
}

impl<P, F: FnMut(&mut Kernel<P>, Event<P>)> Handler<P> for F {
    fn handle(&mut self, kernel: &mut Kernel<P>, event: Event<P>) {
        self(kernel, event)
    }
}

pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    cancelled: HashSet<u64>,
    agents: u32,
    latency: LatencyModel,
    processed: u64,
}

impl<P> Kernel<P> {
    pub fn new(latency: LatencyModel) -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            agents: 0,
            latency,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn register_agent(&mut self) -> AgentId {
        let id = self.agents;
        self.agents += 1;
        id
    }

    /// Registers `n` agents and returns the first id; ids are contiguous.
    pub fn register_agents(&mut self, n: u32) -> AgentId {
        let first = self.agents;
        self.agents += n;
        first
    }

    pub fn agent_count(&self) -> u32 {
        self.agents
    }

    /// Total events handled since construction.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of queued events, including cancelled ones not yet popped.
    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn check_agent(&self, id: AgentId) -> Result<(), KernelError> {
        if id < self.agents {
            Ok(())
        } else {
            Err(KernelError::UnknownAgent(id))
        }
    }

    /// Enqueues a self-addressed event (wakeups, timers).
    pub fn schedule(
        &mut self,
        deliver_at: SimTime,
        recipient: AgentId,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        self.schedule_from(recipient, deliver_at, recipient, payload)
    }

    pub fn schedule_from(
        &mut self,
        sender: AgentId,
        deliver_at: SimTime,
        recipient: AgentId,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        if deliver_at < self.now {
            return Err(KernelError::PastTime { at: deliver_at, now: self.now });
        }
        self.check_agent(recipient)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event { deliver_at, seq, sender, recipient, payload }));
        Ok(EventHandle(seq))
    }

    /// Sends a message that arrives after the one-way latency of the pair.
    pub fn send(&mut self, from: AgentId, to: AgentId, payload: P) -> Result<EventHandle, KernelError> {
        self.check_agent(from)?;
        self.check_agent(to)?;
        let delay = self.latency.sample_ns(from, to, self.now);
        self.schedule_from(from, self.now.plus_nanos(delay), to, payload)
    }

    /// Marks a pending event as cancelled. Returns false if the handle was
    /// already cancelled or never issued. Cancelling an event that has
    /// already been delivered is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Delivery time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.queue.peek() {
            if self.cancelled.contains(&top.0.seq) {
                let seq = top.0.seq;
                self.queue.pop();
                self.cancelled.remove(&seq);
                continue;
            }
            return Some(top.0.deliver_at);
        }
        None
    }

    /// Pops the next live event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<P>> {
        self.peek_time()?;
        let Queued(ev) = self.queue.pop()?;
        self.now = ev.deliver_at;
        Some(ev)
    }

    /// Processes every event with `deliver_at <= end`, then sets the clock to
    /// `end` (if it is ahead of the clock). Returns the number handled.
    pub fn run_until<H: Handler<P>>(&mut self, end: SimTime, handler: &mut H) -> usize {
        let mut count = 0;
        while let Some(t) = self.peek_time() {
            if t > end {
                break;
            }
            let ev = self.pop().expect("peeked event");
            self.processed += 1;
            count += 1;
            handler.handle(self, ev);
        }
        if end > self.now {
            self.now = end;
        }
        count
    }
}

/// SplitMix64 finaliser, used to derive independent per-agent seeds.
pub fn mix_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-agent deterministic random stream.
///
/// The distribution samplers are written on top of the raw uniform stream
/// with `libm`, so draws are bit-identical across hosts.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { rng: ChaCha8Rng::seed_from_u64(seed), spare_normal: None }
    }

    pub fn for_agent(master_seed: u64, agent: u64) -> Self {
        Self::new(mix_seed(master_seed, agent))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer on `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Standard normal via Box-Muller.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.libm_ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * theta.libm_cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Exponential with the given rate (mean `1 / rate`).
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open0().libm_ln() / rate
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen::<u64>()
    }
}
