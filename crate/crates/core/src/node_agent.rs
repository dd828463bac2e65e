//! Storage-node load model and the periodic self-report.
//!
//! A node's load is its configured base plus every active stress profile plus
//! the I/O caused by transfers currently writing to it. The disk accepts
//! writes at `disk_rate * (1 - L/100)`, where `L` excludes the transfer
//! component so that the rate does not feed back on itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Host, HostId, Role};

pub const REPORT_INTERVAL_MS: f64 = 3000.0;

/// Default disk write rates (Mbps) for the first, second and third storage
/// node; any further node uses the last value.
pub const DEFAULT_DISK_RATES_MBPS: [f64; 3] = [400.0, 300.0, 150.0];

/// The disk never drops below this fraction of its base rate, so a fully
/// loaded node still drains its queue.
const MIN_DISK_FRACTION: f64 = 0.01;

pub const MB: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeLoad {
    pub node: HostId,
    /// Free space, whole megabytes.
    pub v_remaining: u64,
    pub v_total: u64,
    pub l_disk_io: f64,
    pub c_cpu: f64,
    pub r_mem: f64,
    pub sampled_at: f64,
}

impl NodeLoad {
    pub fn remaining_fraction(&self) -> f64 {
        if self.v_total == 0 {
            0.0
        } else {
            self.v_remaining as f64 / self.v_total as f64
        }
    }
}

/// Additive load applied while `start <= t < start + duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressProfile {
    #[serde(default = "StressProfile::default_cpu")]
    pub cpu_add: f64,
    #[serde(default = "StressProfile::default_mem")]
    pub mem_add: f64,
    #[serde(default = "StressProfile::default_io")]
    pub io_add: f64,
    #[serde(default, rename = "start_ms")]
    pub start: f64,
    #[serde(default = "StressProfile::forever", rename = "duration_ms")]
    pub duration: f64,
}

impl StressProfile {
    fn default_cpu() -> f64 {
        40.0
    }
    fn default_mem() -> f64 {
        20.0
    }
    fn default_io() -> f64 {
        30.0
    }
    fn forever() -> f64 {
        f64::MAX
    }

    /// The looped-video-playback stand-in, active for the whole run.
    pub fn video_playback() -> Self {
        Self {
            cpu_add: Self::default_cpu(),
            mem_add: Self::default_mem(),
            io_add: Self::default_io(),
            start: 0.0,
            duration: Self::forever(),
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t - self.start < self.duration
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProfile {
    pub v_total_mb: u64,
    pub v_remaining_mb: u64,
    pub disk_rate_mbps: f64,
    pub base_cpu: f64,
    pub base_mem: f64,
    pub base_io: f64,
}

impl NodeProfile {
    /// Profile of the `index`-th storage host, filling gaps with defaults.
    pub fn for_host(host: &Host, index: usize) -> Self {
        let s = host.storage.clone().unwrap_or_default();
        let v_total_mb = s.v_total_mb.unwrap_or(32_768);
        Self {
            v_total_mb,
            v_remaining_mb: s.v_remaining_mb.unwrap_or(v_total_mb / 2).min(v_total_mb),
            disk_rate_mbps: s
                .disk_rate_mbps
                .unwrap_or(DEFAULT_DISK_RATES_MBPS[index.min(DEFAULT_DISK_RATES_MBPS.len() - 1)]),
            base_cpu: s.base_cpu.unwrap_or(5.0),
            base_mem: s.base_mem.unwrap_or(20.0),
            base_io: s.base_io.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("host {0} is not a storage node")]
    NotStorage(HostId),
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("malformed report payload: {0}")]
    Malformed(String),
    #[error("report field {key} is not numeric: {value:?}")]
    NonNumeric { key: char, value: String },
    #[error("report field {key} out of range: {value}")]
    OutOfRange { key: char, value: f64 },
}

/// Payload sent from a storage node to the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPacket {
    pub src_ip: String,
    pub dst_ip: String,
    pub payload: Vec<u8>,
}

/// The four values carried by a report. Total capacity is not on the wire;
/// the controller knows it from the node's registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadReport {
    pub v_remaining: u64,
    pub l_disk_io: f64,
    pub c_cpu: f64,
    pub r_mem: f64,
}

impl LoadReport {
    pub fn into_node_load(self, node: HostId, v_total: u64, sampled_at: f64) -> NodeLoad {
        NodeLoad {
            node,
            v_remaining: self.v_remaining,
            v_total,
            l_disk_io: self.l_disk_io,
            c_cpu: self.c_cpu,
            r_mem: self.r_mem,
            sampled_at,
        }
    }
}

/// `V=<mb>;L=<pct>;C=<pct>;R=<pct>`, percentages to one decimal place.
pub fn encode_report(load: &NodeLoad) -> Vec<u8> {
    format!("V={};L={:.1};C={:.1};R={:.1}", load.v_remaining, load.l_disk_io, load.c_cpu, load.r_mem).into_bytes()
}

pub fn decode_report(payload: &[u8]) -> Result<LoadReport, CodecError> {
    let text = std::str::from_utf8(payload).map_err(|_| CodecError::Malformed("not utf-8".into()))?;
    let fields: Vec<&str> = text.split(';').collect();
    if fields.len() != 4 {
        return Err(CodecError::Malformed(format!("expected 4 fields, found {}", fields.len())));
    }
    let mut values = [""; 4];
    for (slot, (field, key)) in values.iter_mut().zip(fields.iter().zip(['V', 'L', 'C', 'R'])) {
        match field.split_once('=') {
            Some((k, v)) if k.len() == 1 && k.starts_with(key) => *slot = v,
            _ => return Err(CodecError::Malformed(format!("expected {key}=<value>, found {field:?}"))),
        }
    }
    let v_remaining = values[0]
        .parse::<u64>()
        .map_err(|_| CodecError::NonNumeric { key: 'V', value: values[0].to_string() })?;
    let pct = |i: usize, key: char| -> Result<f64, CodecError> {
        let x: f64 = values[i]
            .parse()
            .map_err(|_| CodecError::NonNumeric { key, value: values[i].to_string() })?;
        if !x.is_finite() || !(0.0..=100.0).contains(&x) {
            return Err(CodecError::OutOfRange { key, value: x });
        }
        Ok(x)
    };
    Ok(LoadReport { v_remaining, l_disk_io: pct(1, 'L')?, c_cpu: pct(2, 'C')?, r_mem: pct(3, 'R')? })
}

/// Simulated monitoring side of one storage node.
#[derive(Debug, Clone)]
pub struct NodeAgent {
    pub host: HostId,
    pub ip: String,
    pub profile: NodeProfile,
    pub stresses: Vec<StressProfile>,
}

impl NodeAgent {
    pub fn new(host: &Host, index: usize) -> Result<Self, AgentError> {
        if host.role != Role::Storage {
            return Err(AgentError::NotStorage(host.id.clone()));
        }
        Ok(Self { host: host.id.clone(), ip: host.ip.clone(), profile: NodeProfile::for_host(host, index), stresses: Vec::new() })
    }

    fn stress_sum(&self, t: f64) -> (f64, f64, f64) {
        self.stresses
            .iter()
            .filter(|s| s.is_active(t))
            .fold((0.0, 0.0, 0.0), |(c, r, l), s| (c + s.cpu_add, r + s.mem_add, l + s.io_add))
    }

    /// Disk I/O load without the transfer component.
    pub fn background_io(&self, t: f64) -> f64 {
        (self.profile.base_io + self.stress_sum(t).2).clamp(0.0, 100.0)
    }

    /// Write rate the disk sustains at `t`.
    pub fn disk_rate(&self, t: f64) -> f64 {
        let fraction = (1.0 - self.background_io(t) / 100.0).max(MIN_DISK_FRACTION);
        self.profile.disk_rate_mbps * fraction
    }

    /// Current load: base + active stress + `100 * inbound / disk_rate` of
    /// transfer I/O, each clamped to [0, 100].
    pub fn sample_load(&self, t: f64, free_bytes: u64, inbound_mbps: f64) -> NodeLoad {
        let (c, r, l) = self.stress_sum(t);
        let transfer_io = if self.profile.disk_rate_mbps > 0.0 { 100.0 * inbound_mbps / self.profile.disk_rate_mbps } else { 0.0 };
        NodeLoad {
            node: self.host.clone(),
            v_remaining: free_bytes / MB,
            v_total: self.profile.v_total_mb,
            l_disk_io: (self.profile.base_io + l + transfer_io).clamp(0.0, 100.0),
            c_cpu: (self.profile.base_cpu + c).clamp(0.0, 100.0),
            r_mem: (self.profile.base_mem + r).clamp(0.0, 100.0),
            sampled_at: t,
        }
    }

    /// Builds the report packet for one tick. Addressed to the controller,
    /// it misses every flow table and surfaces as a packet-in.
    pub fn self_report(&self, load: &NodeLoad, controller_ip: &str) -> ReportPacket {
        ReportPacket { src_ip: self.ip.clone(), dst_ip: controller_ip.to_string(), payload: encode_report(load) }
    }

    /// Times at which the disk rate changes because a stress starts or ends.
    pub fn stress_edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = self
            .stresses
            .iter()
            .flat_map(|s| [s.start, s.end()])
            .filter(|t| t.is_finite() && *t < f64::MAX / 2.0)
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
    }
}
