//! Multi-attribute storage-node selection.
//!
//! Candidates are scored on remaining capacity `V`, network score `P`, disk
//! I/O load `L`, CPU `C` and memory `R`. Nodes below 5% free capacity are
//! vetoed; a lone survivor takes the whole file; otherwise TOPSIS closeness
//! decides each node's share.

mod allocate;
mod topsis;

pub use allocate::{allocate_chunks, ChunkPlan, PlanEntry};
pub use topsis::{topsis, topsis_closeness, DecisionOutcome};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node_agent::NodeLoad;
use crate::topology::HostId;

pub const CRITERIA: usize = 5;

/// One decision-matrix row: `[V, P, -L, -C, -R]`.
pub type Row = [f64; CRITERIA];

/// Nodes with less than this fraction of their capacity free are excluded.
pub const VETO_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SelectionError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("decision inputs must be finite")]
    NonFinite,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("every candidate was vetoed for low remaining capacity")]
    AllVetoed,
    #[error("all candidates have zero closeness")]
    DegenerateCloseness,
    #[error("file must contain at least one byte")]
    EmptyFile,
    #[error("{weights} weights for {hosts} hosts")]
    LengthMismatch { weights: usize, hosts: usize },
    #[error("host {0} appears twice in the pool")]
    DuplicateHost(HostId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub host: HostId,
    pub ip: String,
    pub load: NodeLoad,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool {
    entries: Vec<Candidate>,
}

impl CandidatePool {
    pub fn new(entries: Vec<Candidate>) -> Result<Self, SelectionError> {
        let mut seen = BTreeSet::new();
        for c in &entries {
            if !seen.insert(&c.host) {
                return Err(SelectionError::DuplicateHost(c.host.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The pool without vetoed nodes.
    pub fn eligible(&self) -> CandidatePool {
        CandidatePool { entries: self.entries.iter().filter(|c| !is_vetoed(&c.load)).cloned().collect() }
    }

    pub fn hosts(&self) -> Vec<(HostId, String)> {
        self.entries.iter().map(|c| (c.host.clone(), c.ip.clone())).collect()
    }
}

pub fn is_vetoed(load: &NodeLoad) -> bool {
    load.remaining_fraction() < VETO_FRACTION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightVector {
    pub w_v: f64,
    pub w_p: f64,
    pub w_l: f64,
    pub w_c: f64,
    pub w_r: f64,
}

impl Default for WeightVector {
    fn default() -> Self {
        Self { w_v: 0.20, w_p: 0.25, w_l: 0.30, w_c: 0.15, w_r: 0.10 }
    }
}

impl WeightVector {
    /// In decision-matrix column order.
    pub fn as_row(&self) -> Row {
        [self.w_v, self.w_p, self.w_l, self.w_c, self.w_r]
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let row = self.as_row();
        if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SelectionError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SelectionError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Whether `w_l >= w_p >= w_v >= w_c >= w_r`.
    pub fn ordering_respected(&self) -> bool {
        self.w_l >= self.w_p && self.w_p >= self.w_v && self.w_v >= self.w_c && self.w_c >= self.w_r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreRequest {
    pub file_name: String,
    pub total_bytes: u64,
}

pub fn build_decision_matrix(pool: &CandidatePool) -> Result<Vec<Row>, SelectionError> {
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    Ok(pool
        .entries
        .iter()
        .map(|c| [c.load.v_remaining as f64, c.p, -c.load.l_disk_io, -c.load.c_cpu, -c.load.r_mem])
        .collect())
}

/// Veto, single-node shortcut, then TOPSIS-proportional split.
pub fn select_nodes(request: &StoreRequest, pool: &CandidatePool, w: &WeightVector) -> Result<ChunkPlan, SelectionError> {
    select_with_outcome(request, pool, w).map(|(plan, _)| plan)
}

/// Like [`select_nodes`] but also returns the TOPSIS intermediates when a
/// ranking was computed.
pub fn select_with_outcome(
    request: &StoreRequest,
    pool: &CandidatePool,
    w: &WeightVector,
) -> Result<(ChunkPlan, Option<DecisionOutcome>), SelectionError> {
    if request.total_bytes == 0 {
        return Err(SelectionError::EmptyFile);
    }
    w.validate()?;
    if !w.ordering_respected() {
        log::warn!("weights {w:?} do not follow the L >= P >= V >= C >= R ordering");
    }
    let eligible = pool.eligible();
    match eligible.len() {
        0 => Err(SelectionError::AllVetoed),
        1 => Ok((allocate_chunks(&request.file_name, &[1.0], &eligible.hosts(), request.total_bytes)?, None)),
        n => {
            let matrix = build_decision_matrix(&eligible)?;
            let outcome = topsis(&matrix, w)?;
            let plan = match allocate_chunks(&request.file_name, &outcome.closeness, &eligible.hosts(), request.total_bytes) {
                Err(SelectionError::DegenerateCloseness) => {
                    allocate_chunks(&request.file_name, &vec![1.0; n], &eligible.hosts(), request.total_bytes)?
                }
                other => other?,
            };
            Ok((plan, Some(outcome)))
        }
    }
}

/// A placement policy the controller can run on a candidate pool.
pub trait NodeSelector: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, request: &StoreRequest, pool: &CandidatePool) -> Result<ChunkPlan, SelectionError>;
}

/// Load- and network-aware placement.
#[derive(Debug, Clone, Copy, Default)]
pub struct TopsisSelector {
    pub weights: WeightVector,
}

impl NodeSelector for TopsisSelector {
    fn name(&self) -> &'static str {
        "EDWS"
    }

    fn select(&self, request: &StoreRequest, pool: &CandidatePool) -> Result<ChunkPlan, SelectionError> {
        select_nodes(request, pool, &self.weights)
    }
}
