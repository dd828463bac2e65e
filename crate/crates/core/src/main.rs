use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use edgesim::harness::{rank_pool, run_scenario, Mode, PoolDocument, Scenario};
use edgesim::selection::{SelectionError, WeightVector};
use edgesim::topology::{load_topology, validate_topology};

#[derive(Parser)]
#[command(name = "edgesim", version, about = "SDN edge storage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, trace and decision log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario's selection mode (EDWS or TEDS).
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Rank a candidate pool and print the chunk plan.
    Select {
        /// Pool document, inline JSON or a file path.
        #[arg(long)]
        pool: String,
        /// Weight vector, inline JSON or a file path.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Check a topology document.
    Validate {
        #[arg(long)]
        topology: PathBuf,
    },
}

fn json_arg(value: &str) -> Result<String> {
    if value.trim_start().starts_with('{') {
        Ok(value.to_string())
    } else {
        std::fs::read_to_string(value).with_context(|| format!("cannot read {value}"))
    }
}

fn run(scenario: &Path, seed: Option<u64>, out: Option<PathBuf>, mode: Option<Mode>) -> Result<()> {
    let mut s = Scenario::load(scenario)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(mode) = mode {
        s.mode = mode;
    }
    let out = out.unwrap_or_else(|| s.output_dir.clone());
    let report = run_scenario(&s)?;
    let dir = report.write_to(&out)?;
    for &size in &s.file_sizes {
        let refused = report.rows.iter().filter(|r| r.file_bytes == size && r.refusals > 0).count();
        match report.mean_write_time(size) {
            Some(t) => println!("{} {} {size} B: mean write {t:.3} ms, {refused} refused", s.id, s.mode),
            None => println!("{} {} {size} B: every run refused", s.id, s.mode),
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn select(pool: &str, weights: Option<&str>) -> Result<ExitCode> {
    let doc: PoolDocument = serde_json::from_str(&json_arg(pool)?).context("pool document")?;
    let weights: WeightVector = match weights {
        Some(w) => serde_json::from_str(&json_arg(w)?).context("weights document")?,
        None => WeightVector::default(),
    };
    match rank_pool(&doc, &weights) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Err(SelectionError::AllVetoed) => {
            eprintln!("refused: every candidate is below the capacity veto");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn validate(path: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let topo = load_topology(&text)?;
    let report = validate_topology(&topo);
    if report.is_ok() {
        println!("ok: {} switches, {} hosts, {} links", topo.switches.len(), topo.hosts.len(), topo.links.len());
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, out, mode } => run(&scenario, seed, out, mode).map(|_| ExitCode::SUCCESS),
        Command::Select { pool, weights } => select(&pool, weights.as_deref()),
        Command::Validate { topology } => validate(&topology),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
