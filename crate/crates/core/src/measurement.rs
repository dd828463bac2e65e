//! Controller-side link measurement and the per-candidate network score.
//!
//! Bandwidth comes from two port-counter polls per link endpoint, delay from
//! a pair of probes through the link corrected by each switch's control
//! round trip, and loss from comparing one side's tx against the other's rx
//! over the same window.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::netsim::{Engine, NetsimError, PortCounters};
use crate::topology::{HostId, LinkId, Topology};

pub const DEFAULT_POLL_INTERVAL_MS: f64 = 1000.0;

/// Grid on which bandwidth values are reported (Mbps). Values on this grid
/// add and subtract exactly, so `used + remain == capacity` holds bit for bit
/// for capacities that are themselves on the grid.
const BW_GRID: f64 = 1048576.0;

#[derive(Debug, Error, PartialEq)]
pub enum MeasurementError {
    #[error("no time elapsed between counter polls at {0} ms")]
    ZeroElapsed(f64),
    #[error("network score needs at least one candidate")]
    NoCandidates,
    #[error(transparent)]
    Netsim(#[from] NetsimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkState {
    pub link: LinkId,
    pub bw_used: f64,
    pub bw_remain: f64,
    pub delay: f64,
    pub loss_rate: f64,
    pub measured_at: f64,
}

/// Round-trip probe times through a link in each direction (`t1`, `t2`)
/// and the control round trip to each endpoint (`rt_a`, `rt_b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayProbe {
    pub t1: f64,
    pub t2: f64,
    pub rt_a: f64,
    pub rt_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics {
    pub bottleneck_bw: f64,
    pub total_delay: f64,
    pub compound_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScore {
    pub node: HostId,
    pub p: f64,
}

/// All link states taken in one polling round.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub measured_at: f64,
    pub states: BTreeMap<LinkId, LinkState>,
}

fn quantize(mbps: f64) -> f64 {
    (mbps * BW_GRID).round() / BW_GRID
}

/// Used and remaining bandwidth seen by one endpoint between two polls.
pub fn endpoint_bandwidth(prev: PortCounters, cur: PortCounters, bw_max: f64) -> Result<(f64, f64), MeasurementError> {
    let elapsed = cur.timestamp - prev.timestamp;
    if !(elapsed > 0.0) {
        return Err(MeasurementError::ZeroElapsed(cur.timestamp));
    }
    let bytes = (cur.tx_bytes + cur.rx_bytes).saturating_sub(prev.tx_bytes + prev.rx_bytes);
    // bytes per ms -> Mbps
    let used = quantize(bytes as f64 * 8.0 / (elapsed * 1000.0)).clamp(0.0, bw_max);
    Ok((used, bw_max - used))
}

/// Link bandwidth from both endpoints: the link's remaining bandwidth is the
/// smaller of the two endpoint values.
pub fn link_bandwidth(
    a: (PortCounters, PortCounters),
    b: (PortCounters, PortCounters),
    bw_max: f64,
) -> Result<(f64, f64), MeasurementError> {
    let (used_a, remain_a) = endpoint_bandwidth(a.0, a.1, bw_max)?;
    let (used_b, remain_b) = endpoint_bandwidth(b.0, b.1, bw_max)?;
    Ok(if remain_a <= remain_b { (used_a, remain_a) } else { (used_b, remain_b) })
}

pub fn delay_from_probe(p: &DelayProbe) -> f64 {
    ((p.t1 + p.t2 - p.rt_a - p.rt_b) / 2.0).max(0.0)
}

/// Loss over a common window from the tx/rx deltas of both endpoints. An
/// idle direction contributes nothing.
pub fn loss_from_counters(a_tx: u64, a_rx: u64, b_tx: u64, b_rx: u64) -> f64 {
    let ratio = |rx: u64, tx: u64| if tx == 0 { 0.0 } else { 1.0 - rx as f64 / tx as f64 };
    ratio(b_rx, a_tx).max(ratio(a_rx, b_tx)).clamp(0.0, 1.0)
}

/// Bottleneck bandwidth, summed delay and compounded loss along `path`. An
/// empty path (both ends on one switch) reports `empty_bw` and no delay.
pub fn aggregate_path(states: &BTreeMap<LinkId, LinkState>, path: &[LinkId], empty_bw: f64) -> PathMetrics {
    let mut bw = f64::INFINITY;
    let mut delay = 0.0;
    let mut delivered = 1.0;
    for id in path {
        if let Some(s) = states.get(id) {
            bw = bw.min(s.bw_remain);
            delay += s.delay;
            delivered *= 1.0 - s.loss_rate;
        }
    }
    PathMetrics {
        bottleneck_bw: if bw.is_finite() { bw } else { empty_bw },
        total_delay: delay,
        compound_loss: (1.0 - delivered).clamp(0.0, 1.0),
    }
}

/// Min-max normalisation across the slice; a constant slice maps to 0.5.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// `P = scale(bw) - scale(delay) - loss` per candidate. With `scale_loss` the
/// loss term is min-max scaled as well.
pub fn network_scores(candidates: &[(HostId, PathMetrics)], scale_loss: bool) -> Result<Vec<NetworkScore>, MeasurementError> {
    if candidates.is_empty() {
        return Err(MeasurementError::NoCandidates);
    }
    let bw: Vec<f64> = candidates.iter().map(|(_, m)| m.bottleneck_bw).collect();
    let delay: Vec<f64> = candidates.iter().map(|(_, m)| m.total_delay).collect();
    let loss: Vec<f64> = candidates.iter().map(|(_, m)| m.compound_loss.clamp(0.0, 1.0)).collect();
    let (bw, delay) = (min_max_scale(&bw), min_max_scale(&delay));
    let loss = if scale_loss { min_max_scale(&loss) } else { loss };
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(i, (node, _))| NetworkScore { node: node.clone(), p: bw[i] - delay[i] - loss[i] })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct LinkPoll {
    a: PortCounters,
    b: PortCounters,
}

/// Polls every link's endpoint counters on each call and turns consecutive
/// polls into a [`Snapshot`].
#[derive(Debug, Default)]
pub struct LinkMonitor {
    last: Option<Vec<LinkPoll>>,
}

impl LinkMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    fn read_all<E>(engine: &Engine<E>) -> Result<Vec<LinkPoll>, MeasurementError> {
        let topo = engine.topology();
        topo.link_ids()
            .map(|id| {
                let l = topo.link(id);
                Ok(LinkPoll {
                    a: engine.read_port_counters(&l.endpoint_a, id)?,
                    b: engine.read_port_counters(&l.endpoint_b, id)?,
                })
            })
            .collect()
    }

    /// Reads all counters now. Returns a snapshot once a previous poll
    /// exists; the first call only primes the monitor.
    pub fn snapshot_all_links<E>(&mut self, engine: &mut Engine<E>) -> Result<Option<Snapshot>, MeasurementError> {
        let polls = Self::read_all(engine)?;
        let Some(prev) = self.last.replace(polls.clone()) else {
            return Ok(None);
        };
        let topo = std::sync::Arc::clone(engine.topology());
        let now = engine.now();
        let mut states = BTreeMap::new();
        for (i, (before, after)) in prev.iter().zip(&polls).enumerate() {
            let id = LinkId(i);
            let (bw_used, bw_remain) =
                link_bandwidth((before.a, after.a), (before.b, after.b), engine.link_capacity(id))?;
            let loss_rate = loss_from_counters(
                after.a.tx_bytes - before.a.tx_bytes,
                after.a.rx_bytes - before.a.rx_bytes,
                after.b.tx_bytes - before.b.tx_bytes,
                after.b.rx_bytes - before.b.rx_bytes,
            );
            let delay = delay_from_probe(&probe_link(engine, &topo, id));
            states.insert(id, LinkState { link: id, bw_used, bw_remain, delay, loss_rate, measured_at: now });
        }
        Ok(Some(Snapshot { measured_at: now, states }))
    }
}

/// Sends a probe each way through `link` and measures both control round
/// trips. Each probe leg is controller -> switch, across the link, then
/// switch -> controller.
pub fn probe_link<E>(engine: &mut Engine<E>, topo: &Topology, link: LinkId) -> DelayProbe {
    let l = topo.link(link);
    let t1 = engine.control_one_way() + l.base_delay + engine.control_one_way();
    let t2 = engine.control_one_way() + l.base_delay + engine.control_one_way();
    let rt_a = engine.control_channel_rtt(&l.endpoint_a);
    let rt_b = engine.control_channel_rtt(&l.endpoint_b);
    DelayProbe { t1, t2, rt_a, rt_b }
}

/// One CSV row per link state: `time_ms,link,bw_used_mbps,bw_remain_mbps,delay_ms,loss`.
pub fn snapshot_csv_rows(topo: &Topology, snap: &Snapshot) -> Vec<String> {
    snap.states
        .values()
        .map(|s| {
            format!(
                "{:.3},{},{:.6},{:.6},{:.6},{:.6}",
                s.measured_at,
                topo.link(s.link).label(),
                s.bw_used,
                s.bw_remain,
                s.delay,
                s.loss_rate
            )
        })
        .collect()
}

pub const LINK_CSV_HEADER: &str = "time_ms,link,bw_used_mbps,bw_remain_mbps,delay_ms,loss";
