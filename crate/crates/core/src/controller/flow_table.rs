//! Installed routes keyed by ordered (src ip, dst ip) pairs.

use std::collections::BTreeMap;

use crate::topology::LinkId;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEntry {
    pub path: Vec<LinkId>,
    pub cost: f64,
    pub installed_at: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    entries: BTreeMap<(String, String), FlowEntry>,
}

impl FlowTable {
    pub fn lookup(&self, src_ip: &str, dst_ip: &str) -> Option<&FlowEntry> {
        self.entries.get(&(src_ip.to_string(), dst_ip.to_string()))
    }

    pub fn install(&mut self, src_ip: &str, dst_ip: &str, entry: FlowEntry) {
        self.entries.insert((src_ip.to_string(), dst_ip.to_string()), entry);
    }

    pub fn remove(&mut self, src_ip: &str, dst_ip: &str) -> Option<FlowEntry> {
        self.entries.remove(&(src_ip.to_string(), dst_ip.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &FlowEntry)> + '_ {
        self.entries.iter()
    }
}
