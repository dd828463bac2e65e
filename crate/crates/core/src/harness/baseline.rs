//! Capacity-only placement used as the comparison baseline.

use crate::selection::{allocate_chunks, CandidatePool, ChunkPlan, NodeSelector, SelectionError, StoreRequest};

/// Same veto as the multi-attribute selector, then a split proportional to
/// free space alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapacityBaseline;

impl NodeSelector for CapacityBaseline {
    fn name(&self) -> &'static str {
        "TEDS"
    }

    fn select(&self, request: &StoreRequest, pool: &CandidatePool) -> Result<ChunkPlan, SelectionError> {
        if request.total_bytes == 0 {
            return Err(SelectionError::EmptyFile);
        }
        let eligible = pool.eligible();
        if eligible.is_empty() {
            return Err(SelectionError::AllVetoed);
        }
        let hosts = eligible.hosts();
        let free: Vec<f64> = eligible.entries().iter().map(|c| c.load.v_remaining as f64).collect();
        match allocate_chunks(&request.file_name, &free, &hosts, request.total_bytes) {
            Err(SelectionError::DegenerateCloseness) => {
                allocate_chunks(&request.file_name, &vec![1.0; hosts.len()], &hosts, request.total_bytes)
            }
            other => other,
        }
    }
}
