//! Scenario runner: repeated store/pull runs over a configured cluster,
//! metrics rows and CSV output.

mod baseline;
mod scenario;
mod select;
mod system;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::measurement::LINK_CSV_HEADER;
use crate::topology::{load_topology, validate_topology, HostId, Topology, TopologyError};

pub use baseline::CapacityBaseline;
pub use scenario::{CapacityEvent, CrossDirection, CrossTrafficSpec, Mode, Scenario, ScenarioError, StressEntry};
pub use select::{rank_pool, PoolCandidate, PoolDocument, RankedNode, SelectReport};
pub use system::{RunOutcome, System, SystemConfig};

pub const METRICS_HEADER: &str = "scenario,mode,file_bytes,run,write_time_ms,chunks,refusals";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario_id: String,
    pub mode: Mode,
    pub file_bytes: u64,
    pub run_index: usize,
    pub write_time_ms: Option<f64>,
    pub chunks: Vec<(HostId, u64)>,
    pub refusals: u32,
}

impl MetricsRow {
    fn from_outcome(scenario_id: &str, mode: Mode, o: &RunOutcome) -> Self {
        Self {
            scenario_id: scenario_id.to_string(),
            mode,
            file_bytes: o.file_bytes,
            run_index: o.run,
            write_time_ms: o.write_time_ms,
            chunks: o.plan.iter().flat_map(|p| p.entries.iter().map(|e| (e.node.clone(), e.bytes))).collect(),
            refusals: u32::from(o.refusal.is_some()),
        }
    }

    pub fn csv_line(&self) -> String {
        let chunks: Vec<String> = self.chunks.iter().map(|(n, b)| format!("{n}:{b}")).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.scenario_id,
            self.mode,
            self.file_bytes,
            self.run_index,
            self.write_time_ms.map(|t| format!("{t:.3}")).unwrap_or_default(),
            chunks.join("|"),
            self.refusals
        )
    }

    pub fn share_of(&self, node: &HostId) -> f64 {
        let bytes: u64 = self.chunks.iter().filter(|(n, _)| n == node).map(|(_, b)| b).sum();
        bytes as f64 / self.file_bytes as f64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("no metrics rows to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn render_csv(rows: &[MetricsRow]) -> Result<String, CsvError> {
    if rows.is_empty() {
        return Err(CsvError::Empty);
    }
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<(), CsvError> {
    let text = render_csv(rows)?;
    std::fs::write(path, text).map_err(|source| CsvError::Io { path: path.into(), source })
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub mode: Mode,
    pub rows: Vec<MetricsRow>,
    pub outcomes: Vec<RunOutcome>,
    pub trace_csv: String,
    pub decisions: Vec<String>,
    pub links_csv: String,
}

impl ScenarioReport {
    /// Mean write time of completed runs of `file_bytes`.
    pub fn mean_write_time(&self, file_bytes: u64) -> Option<f64> {
        let times: Vec<f64> = self.rows.iter().filter(|r| r.file_bytes == file_bytes).filter_map(|r| r.write_time_ms).collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }

    /// Mean fraction of each `file_bytes` file placed on `node`.
    pub fn mean_share(&self, file_bytes: u64, node: &HostId) -> Option<f64> {
        let shares: Vec<f64> =
            self.rows.iter().filter(|r| r.file_bytes == file_bytes && r.refusals == 0).map(|r| r.share_of(node)).collect();
        (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64)
    }

    /// Writes metrics, trace, decision log, link measurements and one index
    /// file per stored run under `<dir>/<scenario id>/`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, CsvError> {
        let root = dir.join(&self.scenario_id);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CsvError::Io { path, source }
        };
        let indexes = root.join("indexes");
        std::fs::create_dir_all(&indexes).map_err(io(&indexes))?;
        emit_csv(&self.rows, &root.join("metrics.csv"))?;
        let files = [
            ("trace.csv", self.trace_csv.clone()),
            ("decisions.jsonl", self.decisions.iter().fold(String::new(), |mut s, l| {
                let _ = writeln!(s, "{l}");
                s
            })),
            ("links.csv", self.links_csv.clone()),
        ];
        for (name, text) in files {
            let path = root.join(name);
            std::fs::write(&path, text).map_err(io(&path))?;
        }
        for o in &self.outcomes {
            if let Some(text) = &o.index_text {
                let stem = o.file_name.rsplit_once('.').map_or(o.file_name.as_str(), |(s, _)| s);
                let path = indexes.join(format!("{stem}.txt"));
                std::fs::write(&path, text).map_err(io(&path))?;
            }
        }
        Ok(root)
    }
}

pub fn load_scenario_topology(s: &Scenario) -> Result<Topology, ScenarioError> {
    let wrap = |source| ScenarioError::Topology { path: s.topology.clone(), source };
    let text = std::fs::read_to_string(&s.topology).map_err(|source| ScenarioError::Io { path: s.topology.clone(), source })?;
    let topo = load_topology(&text).map_err(wrap)?;
    let report = validate_topology(&topo);
    if !report.is_ok() {
        return Err(wrap(TopologyError::Invalid(report)));
    }
    Ok(topo)
}

/// Loads the scenario's topology and runs it.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    let topo = load_scenario_topology(s)?;
    run_scenario_on(s, Arc::new(topo))
}

/// Runs every file size `repetitions` times, one store-then-pull at a time.
pub fn run_scenario_on(s: &Scenario, topo: Arc<Topology>) -> Result<ScenarioReport, ScenarioError> {
    s.validate()?;
    let mut system = System::new(topo, &SystemConfig::from_scenario(s))?;
    system.enqueue(s.file_sizes.iter().flat_map(|&size| (1..=s.repetitions).map(move |run| (size, run))));
    system.run_to_completion()?;

    let outcomes = system.outcomes().to_vec();
    let rows = outcomes.iter().map(|o| MetricsRow::from_outcome(&s.id, s.mode, o)).collect();
    let mut links_csv = String::from(LINK_CSV_HEADER);
    links_csv.push('\n');
    for row in system.link_rows() {
        links_csv.push_str(row);
        links_csv.push('\n');
    }
    Ok(ScenarioReport {
        scenario_id: s.id.clone(),
        mode: s.mode,
        rows,
        outcomes,
        trace_csv: system.trace_csv(),
        decisions: system.controller().decision_log().to_vec(),
        links_csv,
    })
}
