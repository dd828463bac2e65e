//! Network graph of switches, hosts and links, plus the JSON document that
//! describes it.
//!
//! Links are undirected and their capacity is a single medium shared by both
//! directions. Hosts hang off exactly one switch through an access edge with
//! unbounded capacity, no loss and a fixed `access_delay_ms`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ACCESS_DELAY_MS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub String);

/// Index of a link inside [`Topology::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SwitchId {
    fn from(s: &str) -> Self {
        SwitchId(s.to_string())
    }
}

impl From<&str> for HostId {
    fn from(s: &str) -> Self {
        HostId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Storage,
    Controller,
}

/// Hardware profile of a storage host. Every field is optional in the
/// document; missing values fall back to the defaults in `node_agent`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageProfile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_total_mb: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_remaining_mb: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disk_rate_mbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_cpu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_mem: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_io: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Host {
    pub id: HostId,
    pub ip: String,
    pub role: Role,
    #[serde(rename = "switch")]
    pub attached_switch: SwitchId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    #[serde(rename = "a")]
    pub endpoint_a: SwitchId,
    #[serde(rename = "b")]
    pub endpoint_b: SwitchId,
    #[serde(rename = "capacity_mbps")]
    pub capacity: f64,
    #[serde(rename = "delay_ms")]
    pub base_delay: f64,
    #[serde(rename = "loss", default)]
    pub loss_prob: f64,
}

impl Link {
    pub fn connects(&self, x: &SwitchId, y: &SwitchId) -> bool {
        (&self.endpoint_a == x && &self.endpoint_b == y)
            || (&self.endpoint_a == y && &self.endpoint_b == x)
    }

    pub fn other_end(&self, from: &SwitchId) -> Option<&SwitchId> {
        if &self.endpoint_a == from {
            Some(&self.endpoint_b)
        } else if &self.endpoint_b == from {
            Some(&self.endpoint_a)
        } else {
            None
        }
    }

    /// `a-b`, used in CSV exports and traces.
    pub fn label(&self) -> String {
        format!("{}-{}", self.endpoint_a, self.endpoint_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlChannel {
    pub delay_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

fn default_access_delay() -> f64 {
    DEFAULT_ACCESS_DELAY_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub switches: Vec<SwitchId>,
    pub hosts: Vec<Host>,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(rename = "control_channel")]
    pub control: ControlChannel,
    #[serde(default = "default_access_delay")]
    pub access_delay_ms: f64,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid topology: {0}")]
    Invalid(ValidationReport),
}

/// Every invariant violation found in a topology; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

/// Parses and validates a topology document.
pub fn load_topology(config_text: &str) -> Result<Topology, TopologyError> {
    let topology: Topology = serde_json::from_str(config_text)?;
    let report = validate_topology(&topology);
    if report.is_ok() {
        Ok(topology)
    } else {
        Err(TopologyError::Invalid(report))
    }
}

pub fn validate_topology(t: &Topology) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut switches = BTreeSet::new();
    for sw in &t.switches {
        if !switches.insert(sw) {
            report.push(format!("duplicate switch id {sw}"));
        }
    }
    if switches.is_empty() {
        report.push("topology has no switches");
    }

    let mut seen_pairs = BTreeSet::new();
    for link in &t.links {
        let label = link.label();
        if !(link.capacity > 0.0) || !link.capacity.is_finite() {
            report.push(format!("link {label}: capacity must be positive"));
        }
        if !(link.base_delay >= 0.0) || !link.base_delay.is_finite() {
            report.push(format!("link {label}: delay must be non-negative"));
        }
        if !(0.0..=1.0).contains(&link.loss_prob) {
            report.push(format!("link {label}: loss {} out of range [0, 1]", link.loss_prob));
        }
        if link.endpoint_a == link.endpoint_b {
            report.push(format!("link {label}: endpoints must be distinct"));
        }
        for end in [&link.endpoint_a, &link.endpoint_b] {
            if !switches.contains(end) {
                report.push(format!("link {label}: unknown switch {end}"));
            }
        }
        let key = if link.endpoint_a <= link.endpoint_b {
            (&link.endpoint_a, &link.endpoint_b)
        } else {
            (&link.endpoint_b, &link.endpoint_a)
        };
        if !seen_pairs.insert(key) {
            report.push(format!("link {label}: duplicate undirected link"));
        }
    }

    let mut ids = BTreeSet::new();
    let mut ips = BTreeSet::new();
    let mut controllers = 0;
    let mut storage = 0;
    for host in &t.hosts {
        if !ids.insert(&host.id) {
            report.push(format!("duplicate host id {}", host.id));
        }
        if host.ip.parse::<Ipv4Addr>().is_err() {
            report.push(format!("host {}: ip {:?} is not a dotted quad", host.id, host.ip));
        }
        if !ips.insert(&host.ip) {
            report.push(format!("host {}: duplicate ip {}", host.id, host.ip));
        }
        if !switches.contains(&host.attached_switch) {
            report.push(format!("host {}: unknown switch {}", host.id, host.attached_switch));
        }
        match host.role {
            Role::Controller => controllers += 1,
            Role::Storage => storage += 1,
            Role::Client => {}
        }
    }
    if controllers != 1 {
        report.push(format!("expected exactly one controller host, found {controllers}"));
    }
    if storage == 0 {
        report.push("at least one storage host is required");
    }
    if !(t.control.delay_ms >= 0.0) || !(t.control.jitter_ms >= 0.0) {
        report.push("control channel delay and jitter must be non-negative");
    }
    if !(t.access_delay_ms >= 0.0) {
        report.push("access delay must be non-negative");
    }

    if !switches.is_empty() && !t.is_connected() {
        report.push("switch graph is disconnected");
    }
    report
}

impl Topology {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    pub fn link_between(&self, x: &SwitchId, y: &SwitchId) -> Option<LinkId> {
        self.links.iter().position(|l| l.connects(x, y)).map(LinkId)
    }

    pub fn host(&self, id: &HostId) -> Option<&Host> {
        self.hosts.iter().find(|h| &h.id == id)
    }

    pub fn host_by_ip(&self, ip: &str) -> Option<&Host> {
        self.hosts.iter().find(|h| h.ip == ip)
    }

    pub fn controller(&self) -> Option<&Host> {
        self.hosts.iter().find(|h| h.role == Role::Controller)
    }

    pub fn storage_hosts(&self) -> impl Iterator<Item = &Host> + '_ {
        self.hosts.iter().filter(|h| h.role == Role::Storage)
    }

    /// Links incident to each switch, sorted by neighbour id.
    pub fn adjacency(&self) -> BTreeMap<&SwitchId, Vec<(&SwitchId, LinkId)>> {
        let mut adj: BTreeMap<&SwitchId, Vec<(&SwitchId, LinkId)>> =
            self.switches.iter().map(|s| (s, Vec::new())).collect();
        for (i, l) in self.links.iter().enumerate() {
            if let Some(v) = adj.get_mut(&l.endpoint_a) {
                v.push((&l.endpoint_b, LinkId(i)));
            }
            if let Some(v) = adj.get_mut(&l.endpoint_b) {
                v.push((&l.endpoint_a, LinkId(i)));
            }
        }
        for v in adj.values_mut() {
            v.sort();
        }
        adj
    }

    /// Breadth-first reachability over the switch graph.
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.switches.first() else {
            return true;
        };
        let adj = self.adjacency();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(sw) = queue.pop_front() {
            for (next, _) in adj.get(sw).into_iter().flatten() {
                if seen.insert(*next) {
                    queue.push_back(*next);
                }
            }
        }
        self.switches.iter().all(|s| seen.contains(s))
    }

    /// Switch sequence visited by a link path starting at `from`, or `None`
    /// when the links do not chain.
    pub fn walk(&self, from: &SwitchId, path: &[LinkId]) -> Option<Vec<SwitchId>> {
        let mut at = from.clone();
        let mut seq = vec![at.clone()];
        for id in path {
            let link = self.links.get(id.0)?;
            at = link.other_end(&at)?.clone();
            seq.push(at.clone());
        }
        Some(seq)
    }

    pub fn max_link_capacity(&self) -> Option<f64> {
        self.links.iter().map(|l| l.capacity).reduce(f64::max)
    }
}
