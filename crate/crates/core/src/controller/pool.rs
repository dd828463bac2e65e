//! The monitor plane's information repository.

use std::collections::{BTreeMap, VecDeque};

use crate::measurement::{LinkState, Snapshot};
use crate::node_agent::NodeLoad;
use crate::topology::{HostId, LinkId};

pub const DEFAULT_HISTORY: usize = 128;

#[derive(Debug, Clone)]
pub struct InformationPool {
    link_states: BTreeMap<LinkId, LinkState>,
    node_loads: BTreeMap<HostId, NodeLoad>,
    history: VecDeque<Snapshot>,
    history_bound: usize,
}

impl Default for InformationPool {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY)
    }
}

impl InformationPool {
    pub fn new(history_bound: usize) -> Self {
        Self {
            link_states: BTreeMap::new(),
            node_loads: BTreeMap::new(),
            history: VecDeque::with_capacity(history_bound),
            history_bound: history_bound.max(1),
        }
    }

    /// Merges a polling round. Per-link entries are only replaced by newer
    /// measurements; the snapshot joins the history either way.
    pub fn update_snapshot(&mut self, snap: Snapshot) -> bool {
        let mut changed = false;
        for (id, state) in &snap.states {
            match self.link_states.get(id) {
                Some(cur) if cur.measured_at >= state.measured_at => {}
                _ => {
                    self.link_states.insert(*id, *state);
                    changed = true;
                }
            }
        }
        if self.history.len() == self.history_bound {
            self.history.pop_front();
        }
        self.history.push_back(snap);
        changed
    }

    /// Stores a node sample unless a newer one is already held.
    pub fn update_load(&mut self, load: NodeLoad) -> bool {
        match self.node_loads.get(&load.node) {
            Some(cur) if cur.sampled_at >= load.sampled_at => false,
            _ => {
                self.node_loads.insert(load.node.clone(), load);
                true
            }
        }
    }

    pub fn link_states(&self) -> &BTreeMap<LinkId, LinkState> {
        &self.link_states
    }

    pub fn node_load(&self, node: &HostId) -> Option<&NodeLoad> {
        self.node_loads.get(node)
    }

    /// Latest link states paired with their age at `now`.
    pub fn query_links(&self, now: f64) -> Vec<(&LinkState, f64)> {
        self.link_states.values().map(|s| (s, now - s.measured_at)).collect()
    }

    /// Latest node samples paired with their age at `now`.
    pub fn query_loads(&self, now: f64) -> Vec<(&NodeLoad, f64)> {
        self.node_loads.values().map(|l| (l, now - l.sampled_at)).collect()
    }

    pub fn latest_snapshot(&self) -> Option<&Snapshot> {
        self.history.back()
    }

    /// Time of the oldest link measurement still in use, if any.
    pub fn links_measured_at(&self) -> Option<f64> {
        self.link_states.values().map(|s| s.measured_at).reduce(f64::min)
    }

    pub fn history(&self) -> impl Iterator<Item = &Snapshot> + '_ {
        self.history.iter()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }
}
