//! Standalone node selection on a pool given as JSON.

use serde::{Deserialize, Serialize};

use crate::node_agent::NodeLoad;
use crate::selection::{
    is_vetoed, select_with_outcome, Candidate, CandidatePool, ChunkPlan, SelectionError, StoreRequest, WeightVector,
};
use crate::topology::HostId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolCandidate {
    pub host: HostId,
    pub ip: String,
    pub v_remaining: u64,
    pub v_total: u64,
    pub l: f64,
    pub c: f64,
    pub r: f64,
    pub p: f64,
}

fn default_file_name() -> String {
    "file.bin".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolDocument {
    #[serde(default = "default_file_name")]
    pub file_name: String,
    pub total_bytes: u64,
    pub candidates: Vec<PoolCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedNode {
    pub node: HostId,
    /// `None` when no ranking was needed or the node was vetoed.
    pub closeness: Option<f64>,
    pub vetoed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectReport {
    pub ranking: Vec<RankedNode>,
    pub plan: ChunkPlan,
}

impl PoolDocument {
    pub fn to_pool(&self) -> Result<CandidatePool, SelectionError> {
        CandidatePool::new(
            self.candidates
                .iter()
                .map(|c| Candidate {
                    host: c.host.clone(),
                    ip: c.ip.clone(),
                    load: NodeLoad {
                        node: c.host.clone(),
                        v_remaining: c.v_remaining,
                        v_total: c.v_total,
                        l_disk_io: c.l,
                        c_cpu: c.c,
                        r_mem: c.r,
                        sampled_at: 0.0,
                    },
                    p: c.p,
                })
                .collect(),
        )
    }
}

/// Ranks eligible nodes by closeness (best first), lists vetoed nodes last
/// and returns the resulting plan.
pub fn rank_pool(doc: &PoolDocument, weights: &WeightVector) -> Result<SelectReport, SelectionError> {
    let pool = doc.to_pool()?;
    let request = StoreRequest { file_name: doc.file_name.clone(), total_bytes: doc.total_bytes };
    let (plan, outcome) = select_with_outcome(&request, &pool, weights)?;
    let eligible = pool.eligible();
    let mut ranking: Vec<RankedNode> = eligible
        .entries()
        .iter()
        .enumerate()
        .map(|(i, c)| RankedNode { node: c.host.clone(), closeness: outcome.as_ref().map(|o| o.closeness[i]), vetoed: false })
        .collect();
    ranking.sort_by(|a, b| b.closeness.partial_cmp(&a.closeness).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.node.cmp(&b.node)));
    ranking.extend(
        pool.entries()
            .iter()
            .filter(|c| is_vetoed(&c.load))
            .map(|c| RankedNode { node: c.host.clone(), closeness: None, vetoed: true }),
    );
    Ok(SelectReport { ranking, plan })
}
