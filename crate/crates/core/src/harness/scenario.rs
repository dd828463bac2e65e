//! Scenario documents.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::Direction;
use crate::node_agent::StressProfile;
use crate::selection::WeightVector;
use crate::topology::{HostId, SwitchId, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "EDWS")]
    Edws,
    #[serde(rename = "TEDS")]
    Teds,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Edws => "EDWS",
            Mode::Teds => "TEDS",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EDWS" => Ok(Mode::Edws),
            "TEDS" => Ok(Mode::Teds),
            _ => Err(format!("unknown mode {s:?}, expected EDWS or TEDS")),
        }
    }
}

/// Extra load on one storage node. Omitted profile fields take the video
/// playback defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressEntry {
    pub node: HostId,
    #[serde(default = "StressProfile::video_playback")]
    pub profile: StressProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDirection {
    #[default]
    AToB,
    BToA,
}

impl From<CrossDirection> for Direction {
    fn from(d: CrossDirection) -> Self {
        match d {
            CrossDirection::AToB => Direction::AtoB,
            CrossDirection::BToA => Direction::BtoA,
        }
    }
}

fn forever() -> f64 {
    f64::MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossTrafficSpec {
    pub a: SwitchId,
    pub b: SwitchId,
    pub rate_mbps: f64,
    #[serde(default)]
    pub start_ms: f64,
    #[serde(default = "forever")]
    pub duration_ms: f64,
    #[serde(default)]
    pub direction: CrossDirection,
}

/// Scripted capacity change of one link, e.g. a throttled switch port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityEvent {
    pub a: SwitchId,
    pub b: SwitchId,
    pub at_ms: f64,
    pub capacity_mbps: f64,
}

fn default_gap() -> f64 {
    5000.0
}

fn default_warmup() -> f64 {
    3500.0
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    /// Relative paths resolve against the scenario file's directory.
    pub topology: PathBuf,
    pub file_sizes: Vec<u64>,
    pub repetitions: usize,
    pub mode: Mode,
    #[serde(default)]
    pub stress: Vec<StressEntry>,
    #[serde(default)]
    pub cross_traffic: Vec<CrossTrafficSpec>,
    #[serde(default)]
    pub capacity_events: Vec<CapacityEvent>,
    pub seed: u64,
    #[serde(default)]
    pub weights: WeightVector,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub client: Option<HostId>,
    /// Idle time between the end of one run's pull and the next request.
    #[serde(default = "default_gap")]
    pub run_gap_ms: f64,
    /// Time before the first request, so reports and link polls exist.
    #[serde(default = "default_warmup")]
    pub warmup_ms: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("topology {path}: {source}")]
    Topology { path: PathBuf, source: TopologyError },
    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario file and makes its topology path absolute.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let mut s = Self::from_json(&text)?;
        if s.topology.is_relative() {
            if let Some(dir) = path.parent() {
                s.topology = dir.join(&s.topology);
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.id.is_empty() || self.id.contains(['/', '\\', ',']) {
            return fail("id must be nonempty without slashes or commas");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.file_sizes.is_empty() || self.file_sizes.contains(&0) {
            return fail("file_sizes must be nonempty and positive");
        }
        if !(self.run_gap_ms >= 0.0 && self.warmup_ms >= 0.0) {
            return fail("run_gap_ms and warmup_ms must be non-negative");
        }
        if self.cross_traffic.iter().any(|c| !(c.rate_mbps >= 0.0)) {
            return fail("cross traffic rates must be non-negative");
        }
        self.weights.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}
