//! Shortest paths over measured link state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::{min_max_scale, LinkState};
use crate::topology::{HostId, LinkId, SwitchId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RouteWeights {
    fn default() -> Self {
        Self { alpha: 1.0 / 3.0, beta: 1.0 / 3.0, gamma: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RouteError {
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("source and destination are both {0}")]
    SameHost(HostId),
    #[error("no route from {src} to {dst}")]
    Unreachable { src: HostId, dst: HostId },
    #[error("no link state for {0:?}")]
    MissingState(LinkId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub links: Vec<LinkId>,
    pub switches: Vec<SwitchId>,
    pub cost: f64,
}

/// Link states derived from configuration alone: full capacity free,
/// nominal delay and loss.
pub fn nominal_states(topo: &Topology) -> BTreeMap<LinkId, LinkState> {
    topo.link_ids()
        .map(|id| {
            let l = topo.link(id);
            let state = LinkState {
                link: id,
                bw_used: 0.0,
                bw_remain: l.capacity,
                delay: l.base_delay,
                loss_rate: l.loss_prob,
                measured_at: 0.0,
            };
            (id, state)
        })
        .collect()
}

/// `alpha * (1 - scale(bw_remain)) + beta * scale(delay) + gamma * loss` per
/// link, with min-max scaling over every link in `states`.
pub fn edge_costs(states: &BTreeMap<LinkId, LinkState>, w: &RouteWeights) -> BTreeMap<LinkId, f64> {
    let bw: Vec<f64> = states.values().map(|s| s.bw_remain).collect();
    let delay: Vec<f64> = states.values().map(|s| s.delay).collect();
    let (bw, delay) = (min_max_scale(&bw), min_max_scale(&delay));
    states
        .values()
        .enumerate()
        .map(|(i, s)| (s.link, w.alpha * (1.0 - bw[i]) + w.beta * delay[i] + w.gamma * s.loss_rate.clamp(0.0, 1.0)))
        .collect()
}

/// Sum of `costs` along `links`, accumulated from the source end.
pub fn path_cost(costs: &BTreeMap<LinkId, f64>, links: &[LinkId]) -> f64 {
    links.iter().fold(0.0, |acc, l| acc + costs.get(l).copied().unwrap_or(f64::INFINITY))
}

/// Dijkstra between the switches of `src` and `dst`. Equal-cost paths are
/// resolved by the lexicographically smaller switch sequence.
pub fn compute_route(
    topo: &Topology,
    src: &HostId,
    dst: &HostId,
    states: &BTreeMap<LinkId, LinkState>,
    w: &RouteWeights,
) -> Result<Route, RouteError> {
    if src == dst {
        return Err(RouteError::SameHost(src.clone()));
    }
    let from = &topo.host(src).ok_or_else(|| RouteError::UnknownHost(src.clone()))?.attached_switch;
    let to = &topo.host(dst).ok_or_else(|| RouteError::UnknownHost(dst.clone()))?.attached_switch;
    if let Some(id) = topo.link_ids().find(|id| !states.contains_key(id)) {
        return Err(RouteError::MissingState(id));
    }
    let costs = edge_costs(states, w);
    route_between(topo, from, to, &costs).ok_or_else(|| RouteError::Unreachable { src: src.clone(), dst: dst.clone() })
}

fn route_between(topo: &Topology, from: &SwitchId, to: &SwitchId, costs: &BTreeMap<LinkId, f64>) -> Option<Route> {
    struct Label<'a> {
        cost: f64,
        switches: Vec<&'a SwitchId>,
        links: Vec<LinkId>,
    }
    fn better(a: &Label, b: &Label) -> bool {
        a.cost < b.cost || (a.cost == b.cost && a.switches < b.switches)
    }

    let adjacency = topo.adjacency();
    let mut best: BTreeMap<&SwitchId, Label> = BTreeMap::new();
    let mut done: BTreeMap<&SwitchId, Label> = BTreeMap::new();
    best.insert(from, Label { cost: 0.0, switches: vec![from], links: Vec::new() });

    while let Some(next) = best.iter().reduce(|a, b| if better(b.1, a.1) { b } else { a }).map(|(s, _)| *s) {
        let label = best.remove(next).expect("label present");
        if next == to {
            return Some(Route {
                links: label.links,
                switches: label.switches.into_iter().cloned().collect(),
                cost: label.cost,
            });
        }
        for (nb, link) in adjacency.get(next).into_iter().flatten() {
            if done.contains_key(nb) {
                continue;
            }
            let mut switches = label.switches.clone();
            switches.push(nb);
            let mut links = label.links.clone();
            links.push(*link);
            let candidate = Label { cost: label.cost + costs[link], switches, links };
            if best.get(nb).is_none_or(|cur| better(&candidate, cur)) {
                best.insert(nb, candidate);
            }
        }
        done.insert(next, label);
    }
    None
}
