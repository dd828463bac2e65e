//! The whole cluster on one engine: node agents, the link monitor, the
//! controller, per-node chunk stores and a client issuing store and pull
//! requests one run at a time.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::chunkstore::{read_index, verify_merge, FetchedChunk, IndexRecord, MergeVerdict, NodeStore};
use crate::controller::{
    encode_store_request, Controller, ControllerConfig, Dispatch, Packet, PullFetch, Refusal, StoreDecision,
};
use crate::measurement::{snapshot_csv_rows, LinkMonitor, DEFAULT_POLL_INTERVAL_MS};
use crate::netsim::{CrossTraffic, Engine, Fired, FlowId};
use crate::node_agent::{NodeAgent, REPORT_INTERVAL_MS};
use crate::selection::{ChunkPlan, NodeSelector, TopsisSelector, WeightVector};
use crate::topology::{HostId, LinkId, Role, Topology};

use super::baseline::CapacityBaseline;
use super::scenario::{CapacityEvent, CrossTrafficSpec, Mode, Scenario, ScenarioError, StressEntry};

/// Offset between the first report ticks of consecutive nodes.
const REPORT_STAGGER_MS: f64 = 250.0;
/// Simulated time after which a scenario is considered stuck.
const TIME_LIMIT_MS: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub mode: Mode,
    pub weights: WeightVector,
    pub seed: u64,
    pub stress: Vec<StressEntry>,
    pub cross_traffic: Vec<CrossTrafficSpec>,
    pub capacity_events: Vec<CapacityEvent>,
    pub client: Option<HostId>,
    pub run_gap_ms: f64,
    pub warmup_ms: f64,
    pub controller: ControllerConfig,
}

impl SystemConfig {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            mode: s.mode,
            weights: s.weights,
            seed: s.seed,
            stress: s.stress.clone(),
            cross_traffic: s.cross_traffic.clone(),
            capacity_events: s.capacity_events.clone(),
            client: s.client.clone(),
            run_gap_ms: s.run_gap_ms,
            warmup_ms: s.warmup_ms,
            controller: ControllerConfig::default(),
        }
    }
}

/// Everything observed for one store-then-pull run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub file_name: String,
    pub file_bytes: u64,
    pub run: usize,
    pub requested_at: f64,
    /// Request to delivery of the last chunk; `None` when refused.
    pub write_time_ms: Option<f64>,
    pub plan: Option<ChunkPlan>,
    pub refusal: Option<String>,
    pub index_text: Option<String>,
    pub verdict: Option<MergeVerdict>,
    pub pull_error: Option<String>,
}

#[derive(Debug, Clone)]
enum Ev {
    ReportTick(usize),
    ReportArrive(Packet),
    Poll,
    StressEdge,
    Capacity(LinkId, f64),
    StartRun,
    StoreArrive(Packet),
    DecisionArrive(Result<StoreDecision, Refusal>),
    PullArrive,
}

struct ChunkTask {
    node: HostId,
    chunk_name: String,
    bytes: u64,
}

enum Phase {
    Requested,
    Storing { pending: BTreeMap<FlowId, ChunkTask>, record: IndexRecord },
    Pulling { record: IndexRecord },
    Fetching { record: IndexRecord, queue: VecDeque<PullFetch>, fetched: Vec<FetchedChunk>, current: FlowId, chunk: String },
}

struct ActiveRun {
    outcome: RunOutcome,
    phase: Phase,
}

pub struct System {
    engine: Engine<Ev>,
    controller: Controller,
    monitor: LinkMonitor,
    agents: Vec<NodeAgent>,
    stores: BTreeMap<HostId, NodeStore>,
    client: HostId,
    client_ip: String,
    controller_ip: String,
    pending: VecDeque<(u64, usize)>,
    active: Option<ActiveRun>,
    start_scheduled: bool,
    finished: Vec<RunOutcome>,
    link_rows: Vec<String>,
    run_gap_ms: f64,
    warmup_ms: f64,
    failure: Option<String>,
}

fn link_of(topo: &Topology, a: &crate::topology::SwitchId, b: &crate::topology::SwitchId) -> Result<LinkId, ScenarioError> {
    topo.link_between(a, b).ok_or_else(|| ScenarioError::Invalid(format!("no link between {a} and {b}")))
}

impl System {
    pub fn new(topo: Arc<Topology>, cfg: &SystemConfig) -> Result<Self, ScenarioError> {
        let invalid = |m: String| ScenarioError::Invalid(m);
        let mut agents: Vec<NodeAgent> = topo
            .storage_hosts()
            .enumerate()
            .map(|(i, h)| NodeAgent::new(h, i).expect("storage host"))
            .collect();
        for entry in &cfg.stress {
            let agent = agents
                .iter_mut()
                .find(|a| a.host == entry.node)
                .ok_or_else(|| invalid(format!("stress names unknown storage node {}", entry.node)))?;
            agent.stresses.push(entry.profile);
        }
        let stores = agents
            .iter()
            .map(|a| (a.host.clone(), NodeStore::new(a.host.clone(), a.profile.v_total_mb, a.profile.v_remaining_mb)))
            .collect();

        let client = match &cfg.client {
            Some(id) => topo.host(id).ok_or_else(|| invalid(format!("unknown client {id}")))?,
            None => topo
                .hosts
                .iter()
                .find(|h| h.role == Role::Client)
                .ok_or_else(|| invalid("topology has no client host".into()))?,
        };
        let controller_ip = topo.controller().map(|h| h.ip.clone()).ok_or_else(|| invalid("no controller".into()))?;

        let selector: Box<dyn NodeSelector> = match cfg.mode {
            Mode::Edws => Box::new(TopsisSelector { weights: cfg.weights }),
            Mode::Teds => Box::new(CapacityBaseline),
        };
        let controller = Controller::new(Arc::clone(&topo), selector, cfg.controller);

        let mut engine = Engine::new(Arc::clone(&topo), cfg.seed);
        for c in &cfg.cross_traffic {
            let spec = CrossTraffic {
                link: link_of(&topo, &c.a, &c.b)?,
                direction: c.direction.into(),
                rate: c.rate_mbps,
                start: c.start_ms,
                duration: c.duration_ms,
            };
            engine.inject_cross_traffic(spec).map_err(|e| invalid(e.to_string()))?;
        }
        for ev in &cfg.capacity_events {
            if !(ev.capacity_mbps >= 0.0 && ev.at_ms >= 0.0) {
                return Err(invalid("capacity events need non-negative time and capacity".into()));
            }
            engine.schedule(ev.at_ms, Ev::Capacity(link_of(&topo, &ev.a, &ev.b)?, ev.capacity_mbps));
        }
        for a in &agents {
            engine.set_ingress_limit(&a.host, Some(a.disk_rate(0.0)));
        }
        let mut edges: Vec<f64> = agents.iter().flat_map(|a| a.stress_edges()).filter(|t| *t > 0.0).collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        for t in edges {
            engine.schedule(t, Ev::StressEdge);
        }
        for i in 0..agents.len() {
            engine.schedule(i as f64 * REPORT_STAGGER_MS, Ev::ReportTick(i));
        }
        engine.schedule(0.0, Ev::Poll);

        Ok(Self {
            engine,
            controller,
            monitor: LinkMonitor::new(),
            agents,
            stores,
            client: client.id.clone(),
            client_ip: client.ip.clone(),
            controller_ip,
            pending: VecDeque::new(),
            active: None,
            start_scheduled: false,
            finished: Vec::new(),
            link_rows: Vec::new(),
            run_gap_ms: cfg.run_gap_ms,
            warmup_ms: cfg.warmup_ms,
            failure: None,
        })
    }

    pub fn now(&self) -> f64 {
        self.engine.now()
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn stores(&self) -> &BTreeMap<HostId, NodeStore> {
        &self.stores
    }

    pub fn agents(&self) -> &[NodeAgent] {
        &self.agents
    }

    pub fn outcomes(&self) -> &[RunOutcome] {
        &self.finished
    }

    pub fn trace_csv(&self) -> String {
        crate::netsim::render_trace(self.engine.trace())
    }

    pub fn link_rows(&self) -> &[String] {
        &self.link_rows
    }

    /// Queues store-then-pull runs of the given `(file_bytes, run)` pairs.
    pub fn enqueue(&mut self, runs: impl IntoIterator<Item = (u64, usize)>) {
        self.pending.extend(runs);
        if self.active.is_none() && !self.start_scheduled && !self.pending.is_empty() {
            let at = self.warmup_ms.max(self.engine.now());
            self.engine.schedule(at, Ev::StartRun);
            self.start_scheduled = true;
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.active.is_none()
    }

    /// Processes events up to `t` without regard to runs.
    pub fn advance_to(&mut self, t: f64) -> Result<(), ScenarioError> {
        while let Some(fired) = self.engine.step(t) {
            self.handle(fired);
            self.check()?;
        }
        Ok(())
    }

    /// Steps until every queued run has finished.
    pub fn run_to_completion(&mut self) -> Result<(), ScenarioError> {
        while !self.is_idle() {
            let Some(fired) = self.engine.step(TIME_LIMIT_MS) else {
                return Err(ScenarioError::Simulation("event queue drained before the runs finished".into()));
            };
            self.handle(fired);
            self.check()?;
        }
        Ok(())
    }

    fn check(&mut self) -> Result<(), ScenarioError> {
        match self.failure.take() {
            Some(m) => Err(ScenarioError::Simulation(m)),
            None => Ok(()),
        }
    }

    fn fail(&mut self, message: String) {
        log::error!("{message}");
        self.failure.get_or_insert(message);
    }

    fn handle(&mut self, fired: Fired<Ev>) {
        let now = self.engine.now();
        match fired {
            Fired::FlowDone(flow) => self.on_flow_done(flow.flow_id, flow.bytes),
            Fired::User(ev) => match ev {
                Ev::ReportTick(i) => {
                    let agent = &self.agents[i];
                    let free = self.stores[&agent.host].free_bytes();
                    let load = agent.sample_load(now, free, self.engine.inbound_rate(&agent.host));
                    let packet = Packet::from(agent.self_report(&load, &self.controller_ip));
                    let delay = self.engine.control_one_way();
                    self.engine.schedule_in(delay, Ev::ReportArrive(packet));
                    self.engine.schedule_in(REPORT_INTERVAL_MS, Ev::ReportTick(i));
                }
                Ev::ReportArrive(packet) => {
                    let detail = String::from_utf8_lossy(&packet.payload).into_owned();
                    if let Dispatch::Report(node) = self.controller.handle_packet_in(&packet, now) {
                        self.engine.record("report", node.0, detail);
                    }
                }
                Ev::Poll => {
                    match self.monitor.snapshot_all_links(&mut self.engine) {
                        Ok(Some(snap)) => {
                            self.link_rows.extend(snapshot_csv_rows(self.engine.topology(), &snap));
                            let evicted = self.controller.on_snapshot(snap);
                            if evicted > 0 {
                                self.engine.record("flow_table", "evict", evicted.to_string());
                            }
                        }
                        Ok(None) => {}
                        Err(e) => self.fail(format!("link poll failed: {e}")),
                    }
                    self.engine.schedule_in(DEFAULT_POLL_INTERVAL_MS, Ev::Poll);
                }
                Ev::StressEdge => {
                    for a in &self.agents {
                        let rate = a.disk_rate(now);
                        self.engine.set_ingress_limit(&a.host, Some(rate));
                        self.engine.record("disk_rate", a.host.0.clone(), format!("{rate}Mbps"));
                    }
                }
                Ev::Capacity(link, mbps) => {
                    if let Err(e) = self.engine.set_link_capacity(link, mbps) {
                        self.fail(e.to_string());
                    }
                }
                Ev::StartRun => self.start_run(),
                Ev::StoreArrive(packet) => match self.controller.handle_packet_in(&packet, now) {
                    Dispatch::Store(result) => {
                        let delay = self.engine.control_one_way();
                        self.engine.schedule_in(delay, Ev::DecisionArrive(result));
                    }
                    other => self.fail(format!("store request was not handled as one: {other:?}")),
                },
                Ev::DecisionArrive(result) => self.on_decision(result),
                Ev::PullArrive => self.on_pull(),
            },
        }
    }

    fn start_run(&mut self) {
        self.start_scheduled = false;
        let Some((file_bytes, run)) = self.pending.pop_front() else { return };
        let now = self.engine.now();
        let file_name = format!("file_{file_bytes}_{run}.bin");
        self.engine.record("store_request", self.client.0.clone(), format!("{file_name} {file_bytes}B"));
        let packet = Packet {
            src_ip: self.client_ip.clone(),
            dst_ip: self.controller_ip.clone(),
            payload: encode_store_request(&file_name, file_bytes),
        };
        self.active = Some(ActiveRun {
            outcome: RunOutcome {
                file_name,
                file_bytes,
                run,
                requested_at: now,
                write_time_ms: None,
                plan: None,
                refusal: None,
                index_text: None,
                verdict: None,
                pull_error: None,
            },
            phase: Phase::Requested,
        });
        let delay = self.engine.control_one_way();
        self.engine.schedule_in(delay, Ev::StoreArrive(packet));
    }

    fn finish_run(&mut self) {
        if let Some(run) = self.active.take() {
            self.finished.push(run.outcome);
        }
        if !self.pending.is_empty() {
            self.engine.schedule_in(self.run_gap_ms, Ev::StartRun);
            self.start_scheduled = true;
        }
    }

    fn on_decision(&mut self, result: Result<StoreDecision, Refusal>) {
        let now = self.engine.now();
        let Some(run) = self.active.as_mut() else { return };
        let decision = match result {
            Ok(d) => d,
            Err(refusal) => {
                self.engine.record("refusal", run.outcome.file_name.clone(), refusal.to_string());
                run.outcome.refusal = Some(refusal.to_string());
                self.finish_run();
                return;
            }
        };
        let record = IndexRecord::from_plan(&decision.plan);
        let summary: Vec<String> = decision.plan.entries.iter().map(|e| format!("{}:{}", e.node, e.bytes)).collect();
        self.engine.record("decision", run.outcome.file_name.clone(), summary.join("|"));
        run.outcome.plan = Some(decision.plan.clone());

        let mut pending = BTreeMap::new();
        for (entry, chunk) in decision.plan.entries.iter().zip(&record.entries) {
            let started = self
                .controller
                .forward(&self.client_ip, &entry.ip, now)
                .map_err(|e| e.to_string())
                .and_then(|path| self.engine.start_flow(&self.client, &entry.node, entry.bytes, path).map_err(|e| e.to_string()));
            match started {
                Ok(id) => {
                    pending.insert(id, ChunkTask { node: entry.node.clone(), chunk_name: chunk.chunk_name.clone(), bytes: entry.bytes });
                }
                Err(e) => return self.fail(format!("chunk transfer to {} could not start: {e}", entry.node)),
            }
        }
        if let Some(run) = self.active.as_mut() {
            run.phase = Phase::Storing { pending, record };
        }
    }

    fn on_flow_done(&mut self, id: FlowId, bytes: u64) {
        let now = self.engine.now();
        let Some(run) = self.active.as_mut() else { return };
        match &mut run.phase {
            Phase::Storing { pending, record } => {
                let Some(task) = pending.remove(&id) else { return };
                let store = self.stores.get_mut(&task.node).expect("store for every storage node");
                if let Err(e) = store.store_chunk(&task.chunk_name, task.bytes) {
                    return self.fail(format!("storing {} failed: {e}", task.chunk_name));
                }
                self.engine.record("chunk_stored", task.node.0, task.chunk_name);
                if pending.is_empty() {
                    let text = record.render();
                    run.outcome.write_time_ms = Some(now - run.outcome.requested_at);
                    run.outcome.index_text = Some(text.clone());
                    self.engine.record("write_done", run.outcome.file_name.clone(), format!("{:.3}ms", now - run.outcome.requested_at));
                    // The client keeps only the index text and reads it back for the pull.
                    match read_index(&text) {
                        Ok(record) => {
                            run.phase = Phase::Pulling { record };
                            let delay = self.engine.control_one_way();
                            self.engine.schedule_in(delay, Ev::PullArrive);
                        }
                        Err(e) => {
                            let message = format!("index of {} unreadable: {e}", run.outcome.file_name);
                            self.fail(message)
                        }
                    }
                }
            }
            Phase::Fetching { current, chunk, fetched, .. } if *current == id => {
                let name = std::mem::take(chunk);
                self.engine.record("chunk_fetched", self.client.0.clone(), name.clone());
                fetched.push(FetchedChunk { chunk_name: name, bytes });
                self.next_fetch();
            }
            _ => {}
        }
    }

    fn next_fetch(&mut self) {
        let Some(run) = self.active.as_mut() else { return };
        let Phase::Fetching { record, queue, fetched, current, chunk } = &mut run.phase else { return };
        if let Some(f) = queue.pop_front() {
            match self.engine.start_flow(&f.node, &self.client, f.bytes, f.path) {
                Ok(id) => {
                    *current = id;
                    *chunk = f.chunk_name;
                }
                Err(e) => self.fail(format!("fetch of {} could not start: {e}", f.chunk_name)),
            }
            return;
        }
        let verdict = verify_merge(record, fetched);
        for e in &record.entries {
            let node = self.engine.topology().host_by_ip(&e.node_ip).map(|h| h.id.clone());
            if let Some(store) = node.and_then(|n| self.stores.get_mut(&n)) {
                let _ = store.remove_chunk(&e.chunk_name);
            }
        }
        self.engine.record("merge", run.outcome.file_name.clone(), format!("{verdict:?}"));
        run.outcome.verdict = Some(verdict);
        self.finish_run();
    }

    fn on_pull(&mut self) {
        let now = self.engine.now();
        let Some(run) = self.active.as_mut() else { return };
        let Phase::Pulling { record } = std::mem::replace(&mut run.phase, Phase::Requested) else { return };
        match self.controller.handle_pull_request(&self.client, &record, &self.stores, now) {
            Ok(fetches) => {
                self.engine.record("pull_start", run.outcome.file_name.clone(), format!("{} chunks", fetches.len()));
                run.phase = Phase::Fetching {
                    record,
                    queue: fetches.into(),
                    fetched: Vec::new(),
                    current: FlowId(u64::MAX),
                    chunk: String::new(),
                };
                self.next_fetch();
            }
            Err(e) => {
                self.engine.record("pull_abort", run.outcome.file_name.clone(), e.to_string());
                run.outcome.pull_error = Some(e.to_string());
                self.finish_run();
            }
        }
    }
}
