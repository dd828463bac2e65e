//! Control and decision plane: packet-in dispatch, the information pool,
//! route computation, flow-table installation and the store/pull flows.

mod flow_table;
mod pool;
mod routing;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::chunkstore::{IndexRecord, NodeStore};
use crate::measurement::{aggregate_path, network_scores, LinkState, PathMetrics, Snapshot};
use crate::node_agent::{decode_report, NodeProfile, ReportPacket, REPORT_INTERVAL_MS};
use crate::selection::{Candidate, CandidatePool, ChunkPlan, NodeSelector, PlanEntry, SelectionError, StoreRequest};
use crate::topology::{HostId, LinkId, Topology};

pub use flow_table::{FlowEntry, FlowTable};
pub use pool::{InformationPool, DEFAULT_HISTORY};
pub use routing::{compute_route, edge_costs, nominal_states, path_cost, Route, RouteError, RouteWeights};

const STORE_PREFIX: &str = "STORE:";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub route_weights: RouteWeights,
    /// Samples older than this are not used for decisions.
    pub stale_after_ms: f64,
    /// Relative change of an installed route's optimal cost that evicts it.
    pub invalidation_threshold: f64,
    pub scale_loss: bool,
    pub history: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            route_weights: RouteWeights::default(),
            stale_after_ms: 2.0 * REPORT_INTERVAL_MS,
            invalidation_threshold: 0.2,
            scale_loss: false,
            history: DEFAULT_HISTORY,
        }
    }
}

/// A table-miss packet delivered to the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub src_ip: String,
    pub dst_ip: String,
    pub payload: Vec<u8>,
}

impl From<ReportPacket> for Packet {
    fn from(p: ReportPacket) -> Self {
        Self { src_ip: p.src_ip, dst_ip: p.dst_ip, payload: p.payload }
    }
}

pub fn encode_store_request(file_name: &str, total_bytes: u64) -> Vec<u8> {
    format!("{STORE_PREFIX}{file_name};{total_bytes}").into_bytes()
}

pub fn decode_store_request(payload: &[u8]) -> Option<StoreRequest> {
    let text = std::str::from_utf8(payload).ok()?.strip_prefix(STORE_PREFIX)?;
    let (name, bytes) = text.rsplit_once(';')?;
    if name.is_empty() {
        return None;
    }
    Some(StoreRequest { file_name: name.to_string(), total_bytes: bytes.parse().ok()? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreDecision {
    pub plan: ChunkPlan,
    pub decided_at: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Refusal {
    #[error("every candidate is below the capacity veto")]
    AllVetoed,
    #[error("no link-state snapshot yet")]
    NoLinkState,
    #[error("link state is {age_ms} ms old")]
    StaleLinks { age_ms: f64 },
    #[error("no node load samples yet")]
    NoLoadSamples,
    #[error("newest node sample is {age_ms} ms old")]
    StaleLoads { age_ms: f64 },
    #[error("unknown client {0}")]
    UnknownClient(String),
    #[error("selection failed: {0}")]
    Selection(SelectionError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PullError {
    #[error("chunk {chunk} is missing on {node_ip}")]
    MissingChunk { chunk: String, node_ip: String },
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// One sequential step of a pull: fetch `chunk_name` from `node` over `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct PullFetch {
    pub chunk_name: String,
    pub node: HostId,
    pub bytes: u64,
    pub path: Vec<LinkId>,
}

/// What a packet-in turned into.
#[derive(Debug, Clone, PartialEq)]
pub enum Dispatch {
    Report(HostId),
    Store(Result<StoreDecision, Refusal>),
    Route(FlowEntry),
    Dropped(String),
}

#[derive(Serialize)]
struct DecisionRecord<'a> {
    time_ms: f64,
    kind: &'a str,
    file: &'a str,
    plan: &'a [PlanEntry],
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

pub struct Controller {
    topo: Arc<Topology>,
    config: ControllerConfig,
    pool: InformationPool,
    flows: FlowTable,
    selector: Box<dyn NodeSelector>,
    /// Total capacity per storage ip; reports only carry what is left.
    registry: BTreeMap<String, (HostId, u64)>,
    log: Vec<String>,
    packet_ins: u64,
}

impl Controller {
    /// Registers every storage host of the topology.
    pub fn new(topo: Arc<Topology>, selector: Box<dyn NodeSelector>, config: ControllerConfig) -> Self {
        let registry = topo
            .storage_hosts()
            .enumerate()
            .map(|(i, h)| (h.ip.clone(), (h.id.clone(), NodeProfile::for_host(h, i).v_total_mb)))
            .collect();
        Self {
            pool: InformationPool::new(config.history),
            topo,
            config,
            flows: FlowTable::default(),
            selector,
            registry,
            log: Vec::new(),
            packet_ins: 0,
        }
    }

    pub fn pool(&self) -> &InformationPool {
        &self.pool
    }

    pub fn flow_table(&self) -> &FlowTable {
        &self.flows
    }

    pub fn selector_name(&self) -> &'static str {
        self.selector.name()
    }

    /// Decision and refusal records, one JSON object per line.
    pub fn decision_log(&self) -> &[String] {
        &self.log
    }

    pub fn packet_in_count(&self) -> u64 {
        self.packet_ins
    }

    /// Link states to route on: measured where available, nominal elsewhere.
    fn route_states(&self) -> BTreeMap<LinkId, LinkState> {
        let mut states = nominal_states(&self.topo);
        states.extend(self.pool.link_states().iter().map(|(k, v)| (*k, *v)));
        states
    }

    fn host_of(&self, ip: &str) -> Result<HostId, RouteError> {
        self.topo.host_by_ip(ip).map(|h| h.id.clone()).ok_or_else(|| RouteError::UnknownHost(ip.into()))
    }

    fn route(&self, src: &HostId, dst: &HostId, states: &BTreeMap<LinkId, LinkState>) -> Result<Route, RouteError> {
        compute_route(&self.topo, src, dst, states, &self.config.route_weights)
    }

    /// Adds a polling round to the pool and evicts installed routes whose
    /// optimal cost moved by more than the configured fraction. Returns the
    /// number of evicted entries.
    pub fn on_snapshot(&mut self, snap: Snapshot) -> usize {
        self.pool.update_snapshot(snap);
        let states = self.route_states();
        let mut stale = Vec::new();
        for ((src_ip, dst_ip), entry) in self.flows.iter() {
            let fresh = self
                .host_of(src_ip)
                .and_then(|s| self.host_of(dst_ip).map(|d| (s, d)))
                .and_then(|(s, d)| self.route(&s, &d, &states));
            let evict = match fresh {
                Ok(r) => (r.cost - entry.cost).abs() > self.config.invalidation_threshold * entry.cost,
                Err(_) => true,
            };
            if evict {
                stale.push((src_ip.clone(), dst_ip.clone()));
            }
        }
        for (s, d) in &stale {
            self.flows.remove(s, d);
        }
        stale.len()
    }

    /// Table-miss handling. Load reports update the pool, store requests run
    /// node selection, anything else gets a route installed.
    pub fn handle_packet_in(&mut self, packet: &Packet, now: f64) -> Dispatch {
        self.packet_ins += 1;
        if packet.payload.starts_with(b"V=") {
            let Some((host, v_total)) = self.registry.get(&packet.src_ip).cloned() else {
                log::warn!("report from unregistered {} dropped", packet.src_ip);
                return Dispatch::Dropped(format!("unregistered source {}", packet.src_ip));
            };
            return match decode_report(&packet.payload) {
                Ok(report) => {
                    self.pool.update_load(report.into_node_load(host.clone(), v_total, now));
                    Dispatch::Report(host)
                }
                Err(e) => {
                    log::warn!("report from {} dropped: {e}", packet.src_ip);
                    Dispatch::Dropped(e.to_string())
                }
            };
        }
        if packet.payload.starts_with(STORE_PREFIX.as_bytes()) {
            let Some(req) = decode_store_request(&packet.payload) else {
                log::warn!("undecodable store request from {} dropped", packet.src_ip);
                return Dispatch::Dropped("undecodable store request".into());
            };
            return Dispatch::Store(self.handle_store_from(&packet.src_ip, &req, now));
        }
        match self.install_route(&packet.src_ip, &packet.dst_ip, now) {
            Ok(entry) => Dispatch::Route(entry),
            Err(e) => {
                log::warn!("no route for {} -> {}: {e}", packet.src_ip, packet.dst_ip);
                Dispatch::Dropped(e.to_string())
            }
        }
    }

    fn install_route(&mut self, src_ip: &str, dst_ip: &str, now: f64) -> Result<FlowEntry, RouteError> {
        let (src, dst) = (self.host_of(src_ip)?, self.host_of(dst_ip)?);
        let r = self.route(&src, &dst, &self.route_states())?;
        let entry = FlowEntry { path: r.links, cost: r.cost, installed_at: now };
        self.flows.install(src_ip, dst_ip, entry.clone());
        Ok(entry)
    }

    /// Path for a data packet from `src_ip` to `dst_ip`. A flow-table hit
    /// is forwarded directly; a miss goes through packet-in.
    pub fn forward(&mut self, src_ip: &str, dst_ip: &str, now: f64) -> Result<Vec<LinkId>, RouteError> {
        if let Some(e) = self.flows.lookup(src_ip, dst_ip) {
            return Ok(e.path.clone());
        }
        self.packet_ins += 1;
        self.install_route(src_ip, dst_ip, now).map(|e| e.path)
    }

    fn handle_store_from(&mut self, src_ip: &str, req: &StoreRequest, now: f64) -> Result<StoreDecision, Refusal> {
        match self.topo.host_by_ip(src_ip) {
            Some(h) => {
                let client = h.id.clone();
                self.handle_store_request(&client, &req.file_name, req.total_bytes, now)
            }
            None => {
                let refusal = Refusal::UnknownClient(src_ip.to_string());
                self.log_decision(now, &req.file_name, &[], Some(refusal.to_string()));
                Err(refusal)
            }
        }
    }

    /// Runs node selection for a store request from `client` on fresh pool
    /// data and installs routes from the client to every chosen node.
    pub fn handle_store_request(
        &mut self,
        client: &HostId,
        file_name: &str,
        total_bytes: u64,
        now: f64,
    ) -> Result<StoreDecision, Refusal> {
        let result = self.decide(client, file_name, total_bytes, now);
        match &result {
            Ok(d) => self.log_decision(now, file_name, &d.plan.entries, None),
            Err(r) => self.log_decision(now, file_name, &[], Some(r.to_string())),
        }
        result
    }

    fn decide(&mut self, client: &HostId, file_name: &str, total_bytes: u64, now: f64) -> Result<StoreDecision, Refusal> {
        let client_ip = self.topo.host(client).ok_or_else(|| Refusal::UnknownClient(client.0.clone()))?.ip.clone();
        let measured = self.pool.links_measured_at().ok_or(Refusal::NoLinkState)?;
        if now - measured > self.config.stale_after_ms {
            return Err(Refusal::StaleLinks { age_ms: now - measured });
        }
        let states = self.route_states();

        let mut fresh = Vec::new();
        let mut newest_age = None::<f64>;
        for (ip, (host, _)) in &self.registry {
            let Some(load) = self.pool.node_load(host) else { continue };
            let age = now - load.sampled_at;
            newest_age = Some(newest_age.map_or(age, |a| a.min(age)));
            if age > self.config.stale_after_ms {
                log::info!("{host} skipped: newest sample is {age} ms old");
                continue;
            }
            fresh.push((host.clone(), ip.clone(), load.clone()));
        }
        match newest_age {
            None => return Err(Refusal::NoLoadSamples),
            Some(age) if fresh.is_empty() => return Err(Refusal::StaleLoads { age_ms: age }),
            _ => {}
        }

        let empty_bw = self.topo.max_link_capacity().unwrap_or(0.0);
        let mut routes = BTreeMap::new();
        let mut metrics: Vec<(HostId, PathMetrics)> = Vec::new();
        let mut reachable = Vec::new();
        for (host, ip, load) in fresh {
            match self.route(client, &host, &states) {
                Ok(r) => {
                    metrics.push((host.clone(), aggregate_path(&states, &r.links, empty_bw)));
                    routes.insert(ip.clone(), r);
                    reachable.push((host, ip, load));
                }
                Err(e) => log::warn!("{host} skipped: {e}"),
            }
        }
        let scores = network_scores(&metrics, self.config.scale_loss).map_err(|_| Refusal::NoLoadSamples)?;
        let candidates = reachable
            .into_iter()
            .zip(scores)
            .map(|((host, ip, load), score)| Candidate { host, ip, load, p: score.p })
            .collect();
        let pool = CandidatePool::new(candidates).map_err(Refusal::Selection)?;
        let request = StoreRequest { file_name: file_name.to_string(), total_bytes };
        let plan = self.selector.select(&request, &pool).map_err(|e| match e {
            SelectionError::AllVetoed => Refusal::AllVetoed,
            other => Refusal::Selection(other),
        })?;
        for e in &plan.entries {
            let r = &routes[&e.ip];
            self.flows.install(&client_ip, &e.ip, FlowEntry { path: r.links.clone(), cost: r.cost, installed_at: now });
        }
        Ok(StoreDecision { plan, decided_at: now })
    }

    fn log_decision(&mut self, now: f64, file: &str, plan: &[PlanEntry], reason: Option<String>) {
        let kind = if reason.is_some() { "refusal" } else { "decision" };
        let record = DecisionRecord { time_ms: now, kind, file, plan, reason };
        self.log.push(serde_json::to_string(&record).expect("decision record serializes"));
    }

    /// Checks every chunk of `record` is where the index says and returns
    /// the fetches in index order, each with a route to the client.
    pub fn handle_pull_request(
        &mut self,
        client: &HostId,
        record: &IndexRecord,
        stores: &BTreeMap<HostId, NodeStore>,
        now: f64,
    ) -> Result<Vec<PullFetch>, PullError> {
        let client_ip = self.topo.host(client).ok_or_else(|| RouteError::UnknownHost(client.clone()))?.ip.clone();
        let mut fetches = Vec::with_capacity(record.entries.len());
        for e in &record.entries {
            let missing = || PullError::MissingChunk { chunk: e.chunk_name.clone(), node_ip: e.node_ip.clone() };
            let node = self.topo.host_by_ip(&e.node_ip).ok_or_else(missing)?.id.clone();
            let bytes = stores.get(&node).ok_or_else(missing)?.fetch_chunk(&e.chunk_name).map_err(|_| missing())?;
            let path = self.forward(&e.node_ip, &client_ip, now)?;
            fetches.push(PullFetch { chunk_name: e.chunk_name.clone(), node, bytes, path });
        }
        Ok(fetches)
    }
}

#[cfg(test)]
mod tests;
