//! Deterministic discrete-event engine.
//!
//! Transfers are fluid: every active flow and cross-traffic stream gets a
//! max-min fair rate over the links it crosses (plus the destination host's
//! ingress limit, if one is set), recomputed whenever the set of participants
//! or a capacity changes. Byte counters advance continuously between events.
//! Loss thins the receiver side of each link in 1500-byte quanta.
//!
//! User events carry an arbitrary payload `E` and come back out of
//! [`Engine::step`] in timestamp order, ties broken by insertion order.

mod fairshare;
mod trace;

pub use fairshare::{max_min_rates, Demand};
pub use trace::{render as render_trace, TraceRecord, TRACE_HEADER};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::topology::{HostId, LinkId, SwitchId, Topology};

/// Size of the unit on which loss is drawn.
pub const LOSS_QUANTUM_BYTES: f64 = 1500.0;

/// Mbps to bytes per millisecond.
const BYTES_PER_MS_PER_MBPS: f64 = 125.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::AtoB => 0,
            Direction::BtoA => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub flow_id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub bytes: u64,
    pub path: Vec<LinkId>,
    pub start: f64,
    pub completed_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortCounters {
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub timestamp: f64,
}

/// Constant-rate background load on one link, travelling `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTraffic {
    pub link: LinkId,
    pub direction: Direction,
    pub rate: f64,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("unknown link {0:?}")]
    UnknownLink(LinkId),
    #[error("link {link:?} is not incident to switch {switch}")]
    NotIncident { switch: SwitchId, link: LinkId },
    #[error("path does not connect {src} to {dst}")]
    InvalidPath { src: HostId, dst: HostId },
    #[error("flow must carry at least one byte")]
    EmptyFlow,
    #[error("cross-traffic rate must be non-negative, got {0}")]
    NegativeRate(f64),
}

/// What [`Engine::step`] hands back to the driver.
#[derive(Debug, Clone, PartialEq)]
pub enum Fired<E> {
    User(E),
    FlowDone(Flow),
}

enum Slot<E> {
    User(E),
    Deliver(FlowId),
    CrossOn(usize),
    CrossOff(usize),
}

struct Scheduled<E> {
    at: f64,
    seq: u64,
    slot: Slot<E>,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<E> Eq for Scheduled<E> {}
impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Scheduled<E> {
    // BinaryHeap is a max-heap; invert so the earliest (then oldest) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Transfer {
    flow: Flow,
    hops: Vec<(LinkId, Direction)>,
    remaining: f64,
    rate: f64,
    latency: f64,
}

struct Stream {
    spec: CrossTraffic,
    active: bool,
    rate: f64,
}

#[derive(Default, Clone)]
struct LinkCounters {
    sent: [f64; 2],
    delivered: [f64; 2],
    pending: [f64; 2],
}

pub struct Engine<E> {
    topology: Arc<Topology>,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
    next_flow: u64,
    transmitting: BTreeMap<FlowId, Transfer>,
    in_flight: BTreeMap<FlowId, Flow>,
    streams: Vec<Stream>,
    capacity: Vec<f64>,
    ingress_limit: BTreeMap<HostId, f64>,
    counters: Vec<LinkCounters>,
    loss_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
}

impl<E> Engine<E> {
    pub fn new(topology: Arc<Topology>, seed: u64) -> Self {
        let capacity = topology.links.iter().map(|l| l.capacity).collect();
        let counters = vec![LinkCounters::default(); topology.links.len()];
        Self {
            topology,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            next_flow: 0,
            transmitting: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            streams: Vec::new(),
            capacity,
            ingress_limit: BTreeMap::new(),
            counters,
            loss_rng: ChaCha8Rng::seed_from_u64(seed),
            jitter_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            trace: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn record(&mut self, kind: &str, subject: impl Into<String>, detail: impl Into<String>) {
        self.trace.push(TraceRecord::new(self.now, kind, subject, detail));
    }

    /// Schedules a user event. Times in the past are clamped to now.
    pub fn schedule(&mut self, at: f64, event: E) {
        debug_assert!(at >= self.now, "scheduled into the past: {at} < {}", self.now);
        self.push(at.max(self.now), Slot::User(event));
    }

    pub fn schedule_in(&mut self, delay: f64, event: E) {
        self.schedule(self.now + delay.max(0.0), event);
    }

    fn push(&mut self, at: f64, slot: Slot<E>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { at, seq, slot });
    }

    /// Processes everything up to and including `t`, returning the fired
    /// events in order. The clock ends at `t`.
    pub fn run_until(&mut self, t: f64) -> Vec<Fired<E>> {
        let mut fired = Vec::new();
        while let Some(ev) = self.step(t) {
            fired.push(ev);
        }
        fired
    }

    /// Advances to the next user-visible event at or before `until`. Returns
    /// `None` (with the clock at `until`) when there is none.
    pub fn step(&mut self, until: f64) -> Option<Fired<E>> {
        loop {
            let next_queue = self.queue.peek().map(|s| s.at);
            let next_tx = self.earliest_transmission_end();
            let tx_first = match (next_tx, next_queue) {
                (Some((t, _)), Some(q)) => t <= q,
                (Some(_), None) => true,
                _ => false,
            };
            if tx_first {
                let (t, id) = next_tx.expect("checked above");
                if t > until {
                    break;
                }
                self.advance(t);
                self.finish_transmission(id);
                continue;
            }
            match next_queue {
                Some(q) if q <= until => {}
                _ => break,
            }
            let Scheduled { at, slot, .. } = self.queue.pop().expect("peeked");
            self.advance(at);
            match slot {
                Slot::User(e) => return Some(Fired::User(e)),
                Slot::Deliver(id) => {
                    let mut flow = self.in_flight.remove(&id).expect("delivered flow is in flight");
                    flow.completed_at = Some(self.now);
                    self.record("flow_done", format!("flow{}", id.0), format!("{}->{} {}B", flow.src, flow.dst, flow.bytes));
                    return Some(Fired::FlowDone(flow));
                }
                Slot::CrossOn(i) => {
                    self.streams[i].active = true;
                    let s = self.streams[i].spec;
                    self.record("cross_start", self.topology.link(s.link).label(), format!("{}Mbps", s.rate));
                    self.reallocate();
                }
                Slot::CrossOff(i) => {
                    self.streams[i].active = false;
                    self.streams[i].rate = 0.0;
                    let s = self.streams[i].spec;
                    self.record("cross_end", self.topology.link(s.link).label(), format!("{}Mbps", s.rate));
                    self.reallocate();
                }
            }
        }
        self.advance(until.max(self.now));
        None
    }

    /// Starts a transfer along `path`, which must lead from `src`'s switch to
    /// `dst`'s switch.
    pub fn start_flow(&mut self, src: &HostId, dst: &HostId, bytes: u64, path: Vec<LinkId>) -> Result<FlowId, NetsimError> {
        if bytes == 0 {
            return Err(NetsimError::EmptyFlow);
        }
        let topo = Arc::clone(&self.topology);
        let src_host = topo.host(src).ok_or_else(|| NetsimError::UnknownHost(src.clone()))?;
        let dst_host = topo.host(dst).ok_or_else(|| NetsimError::UnknownHost(dst.clone()))?;
        let invalid = || NetsimError::InvalidPath { src: src.clone(), dst: dst.clone() };
        if src == dst {
            return Err(invalid());
        }
        let mut at = src_host.attached_switch.clone();
        let mut hops = Vec::with_capacity(path.len());
        let mut latency = 2.0 * topo.access_delay_ms;
        for &id in &path {
            let link = topo.links.get(id.0).ok_or(NetsimError::UnknownLink(id))?;
            let dir = if link.endpoint_a == at {
                Direction::AtoB
            } else if link.endpoint_b == at {
                Direction::BtoA
            } else {
                return Err(invalid());
            };
            at = link.other_end(&at).expect("incident").clone();
            hops.push((id, dir));
            latency += link.base_delay;
        }
        if at != dst_host.attached_switch {
            return Err(invalid());
        }

        let id = FlowId(self.next_flow);
        self.next_flow += 1;
        let flow = Flow {
            flow_id: id,
            src: src.clone(),
            dst: dst.clone(),
            bytes,
            path,
            start: self.now,
            completed_at: None,
        };
        self.record("flow_start", format!("flow{}", id.0), format!("{src}->{dst} {bytes}B"));
        self.transmitting.insert(id, Transfer { flow, hops, remaining: bytes as f64, rate: 0.0, latency });
        self.reallocate();
        Ok(id)
    }

    pub fn inject_cross_traffic(&mut self, spec: CrossTraffic) -> Result<(), NetsimError> {
        if !(spec.rate >= 0.0) {
            return Err(NetsimError::NegativeRate(spec.rate));
        }
        if spec.link.0 >= self.topology.links.len() {
            return Err(NetsimError::UnknownLink(spec.link));
        }
        if spec.rate == 0.0 || spec.duration <= 0.0 {
            return Ok(());
        }
        let idx = self.streams.len();
        self.streams.push(Stream { spec, active: false, rate: 0.0 });
        let start = spec.start.max(self.now);
        self.push(start, Slot::CrossOn(idx));
        self.push(spec.start + spec.duration, Slot::CrossOff(idx));
        Ok(())
    }

    /// Changes a link's capacity from now on.
    pub fn set_link_capacity(&mut self, link: LinkId, capacity_mbps: f64) -> Result<(), NetsimError> {
        let slot = self.capacity.get_mut(link.0).ok_or(NetsimError::UnknownLink(link))?;
        *slot = capacity_mbps.max(0.0);
        let label = self.topology.link(link).label();
        self.record("capacity", label, format!("{capacity_mbps}Mbps"));
        self.reallocate();
        Ok(())
    }

    pub fn link_capacity(&self, link: LinkId) -> f64 {
        self.capacity[link.0]
    }

    /// Caps the aggregate rate of flows terminating at `host`; `None` removes
    /// the cap.
    pub fn set_ingress_limit(&mut self, host: &HostId, limit_mbps: Option<f64>) {
        let changed = match limit_mbps {
            Some(l) => self.ingress_limit.insert(host.clone(), l.max(0.0)) != Some(l.max(0.0)),
            None => self.ingress_limit.remove(host).is_some(),
        };
        if changed {
            self.reallocate();
        }
    }

    /// Sum of current rates (Mbps) of transfers heading to `host`.
    pub fn inbound_rate(&self, host: &HostId) -> f64 {
        self.transmitting
            .values()
            .filter(|t| &t.flow.dst == host && t.rate.is_finite())
            .map(|t| t.rate)
            .sum()
    }

    pub fn flow_rate(&self, id: FlowId) -> Option<f64> {
        self.transmitting.get(&id).map(|t| t.rate)
    }

    pub fn active_flows(&self) -> usize {
        self.transmitting.len() + self.in_flight.len()
    }

    pub fn read_port_counters(&self, switch: &SwitchId, link: LinkId) -> Result<PortCounters, NetsimError> {
        let l = self.topology.links.get(link.0).ok_or(NetsimError::UnknownLink(link))?;
        let c = &self.counters[link.0];
        let (tx, rx) = if &l.endpoint_a == switch {
            (c.sent[0], c.delivered[1])
        } else if &l.endpoint_b == switch {
            (c.sent[1], c.delivered[0])
        } else {
            return Err(NetsimError::NotIncident { switch: switch.clone(), link });
        };
        Ok(PortCounters { tx_bytes: tx.round() as u64, rx_bytes: rx.round() as u64, timestamp: self.now })
    }

    /// One traversal of the controller channel: delay plus a draw in
    /// `[-jitter/2, +jitter/2]`.
    pub fn control_one_way(&mut self) -> f64 {
        let c = self.topology.control;
        if c.jitter_ms > 0.0 {
            c.delay_ms + self.jitter_rng.random_range(-c.jitter_ms / 2.0..=c.jitter_ms / 2.0)
        } else {
            c.delay_ms
        }
    }

    /// Controller to `switch` and back: `2 * delay` plus a draw in
    /// `[-jitter, +jitter]`.
    pub fn control_channel_rtt(&mut self, _switch: &SwitchId) -> f64 {
        let c = self.topology.control;
        if c.jitter_ms > 0.0 {
            2.0 * c.delay_ms + self.jitter_rng.random_range(-c.jitter_ms..=c.jitter_ms)
        } else {
            2.0 * c.delay_ms
        }
    }

    fn earliest_transmission_end(&self) -> Option<(f64, FlowId)> {
        let mut best: Option<(f64, FlowId)> = None;
        for (&id, t) in &self.transmitting {
            let end = if t.remaining <= 1e-6 || t.rate.is_infinite() {
                self.now
            } else if t.rate > 0.0 {
                self.now + t.remaining / (t.rate * BYTES_PER_MS_PER_MBPS)
            } else {
                continue;
            };
            if best.is_none_or(|(b, _)| end < b) {
                best = Some((end, id));
            }
        }
        best
    }

    fn finish_transmission(&mut self, id: FlowId) {
        let mut t = self.transmitting.remove(&id).expect("transmitting flow");
        if t.remaining > 0.0 {
            let rest = t.remaining;
            for &(link, dir) in &t.hops {
                self.carry(link, dir, rest);
            }
            t.remaining = 0.0;
        }
        let deliver_at = self.now + t.latency;
        self.record("flow_tx_done", format!("flow{}", id.0), format!("deliver_at={deliver_at:.3}"));
        self.in_flight.insert(id, t.flow);
        self.push(deliver_at, Slot::Deliver(id));
        self.reallocate();
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            let mut moves: Vec<(LinkId, Direction, f64)> = Vec::new();
            for tr in self.transmitting.values_mut() {
                let moved = if tr.rate.is_infinite() {
                    tr.remaining
                } else {
                    (tr.rate * BYTES_PER_MS_PER_MBPS * dt).min(tr.remaining)
                };
                if moved > 0.0 {
                    tr.remaining -= moved;
                    moves.extend(tr.hops.iter().map(|&(l, d)| (l, d, moved)));
                }
            }
            for s in &self.streams {
                if s.active && s.rate > 0.0 {
                    moves.push((s.spec.link, s.spec.direction, s.rate * BYTES_PER_MS_PER_MBPS * dt));
                }
            }
            for (l, d, bytes) in moves {
                self.carry(l, d, bytes);
            }
        }
        if t > self.now {
            self.now = t;
        }
    }

    fn carry(&mut self, link: LinkId, dir: Direction, bytes: f64) {
        let loss = self.topology.links[link.0].loss_prob;
        let c = &mut self.counters[link.0];
        let d = dir.index();
        c.sent[d] += bytes;
        if loss <= 0.0 {
            c.delivered[d] += bytes;
            return;
        }
        c.pending[d] += bytes;
        let quanta = (c.pending[d] / LOSS_QUANTUM_BYTES).floor();
        if quanta >= 1.0 {
            let dropped = Binomial::new(quanta as u64, loss.min(1.0))
                .expect("valid binomial")
                .sample(&mut self.loss_rng);
            c.delivered[d] += (quanta - dropped as f64) * LOSS_QUANTUM_BYTES;
            c.pending[d] -= quanta * LOSS_QUANTUM_BYTES;
        }
    }

    fn reallocate(&mut self) {
        let nlinks = self.capacity.len();
        let mut caps = self.capacity.clone();
        let mut ingress_index = BTreeMap::new();
        for (host, &limit) in &self.ingress_limit {
            ingress_index.insert(host.clone(), caps.len());
            caps.push(limit);
        }
        let mut demands = Vec::new();
        for t in self.transmitting.values() {
            let mut resources: Vec<usize> = t.hops.iter().map(|(l, _)| l.0).collect();
            if let Some(&i) = ingress_index.get(&t.flow.dst) {
                resources.push(i);
            }
            demands.push(Demand { resources, ceiling: None });
        }
        for s in self.streams.iter().filter(|s| s.active) {
            debug_assert!(s.spec.link.0 < nlinks);
            demands.push(Demand { resources: vec![s.spec.link.0], ceiling: Some(s.spec.rate) });
        }
        let rates = max_min_rates(&caps, &demands);
        let mut it = rates.into_iter();
        for t in self.transmitting.values_mut() {
            t.rate = it.next().expect("one rate per transfer");
        }
        for s in self.streams.iter_mut().filter(|s| s.active) {
            s.rate = it.next().expect("one rate per stream");
        }
    }
}
