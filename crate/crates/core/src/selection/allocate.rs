//! Proportional split of a file across ranked nodes.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::topology::HostId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub node: HostId,
    pub ip: String,
    pub bytes: u64,
}

/// Per-node byte allocation for one file. Entries are ordered by descending
/// share weight, ties by host id, and their sizes sum to `total_bytes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub file_name: String,
    pub total_bytes: u64,
    pub entries: Vec<PlanEntry>,
}

impl ChunkPlan {
    pub fn bytes_for(&self, node: &HostId) -> u64 {
        self.entries.iter().filter(|e| &e.node == node).map(|e| e.bytes).sum()
    }
}

/// Fixed-point resolution of the share weights.
const WEIGHT_BITS: u32 = 32;

/// Splits `total_bytes` in proportion to `weights` using largest-remainder
/// rounding (ties to the lowest host id). Zero-byte entries are dropped.
///
/// Weights are mapped onto a 2^32 fixed-point grid first so that the split
/// is done in exact integer arithmetic.
pub fn allocate_chunks(
    file_name: &str,
    weights: &[f64],
    hosts: &[(HostId, String)],
    total_bytes: u64,
) -> Result<ChunkPlan, SelectionError> {
    if total_bytes == 0 {
        return Err(SelectionError::EmptyFile);
    }
    if weights.len() != hosts.len() || hosts.is_empty() {
        return Err(SelectionError::LengthMismatch { weights: weights.len(), hosts: hosts.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SelectionError::NonFinite);
    }
    let sum: f64 = weights.iter().sum();
    let fixed: Vec<u128> = if hosts.len() == 1 {
        vec![1]
    } else if sum > 0.0 {
        weights.iter().map(|w| ((w / sum) * (1u64 << WEIGHT_BITS) as f64).round() as u128).collect()
    } else {
        return Err(SelectionError::DegenerateCloseness);
    };
    let denom: u128 = fixed.iter().sum();
    if denom == 0 {
        return Err(SelectionError::DegenerateCloseness);
    }

    let total = total_bytes as u128;
    let mut bytes: Vec<u128> = fixed.iter().map(|f| total * f / denom).collect();
    let remainders: Vec<u128> = fixed.iter().map(|f| total * f % denom).collect();
    let assigned: u128 = bytes.iter().sum();
    let mut leftover = total - assigned;

    let mut by_remainder: Vec<usize> = (0..hosts.len()).collect();
    by_remainder.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then_with(|| hosts[a].0.cmp(&hosts[b].0)));
    for &i in by_remainder.iter().cycle() {
        if leftover == 0 {
            break;
        }
        bytes[i] += 1;
        leftover -= 1;
    }

    let mut order: Vec<usize> = (0..hosts.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b].partial_cmp(&weights[a]).unwrap_or(Ordering::Equal).then_with(|| hosts[a].0.cmp(&hosts[b].0))
    });
    let entries = order
        .into_iter()
        .filter(|&i| bytes[i] > 0)
        .map(|i| PlanEntry { node: hosts[i].0.clone(), ip: hosts[i].1.clone(), bytes: bytes[i] as u64 })
        .collect();
    Ok(ChunkPlan { file_name: file_name.to_string(), total_bytes, entries })
}
