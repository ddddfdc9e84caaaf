//! `hippo`: build, analyze and use cognitive maps from the command line.
//!
//! Exit codes: 0 on success, 1 for invalid flags or configuration, 2 when a
//! command fails at runtime.

mod commands;
mod config;

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hippo", version, about = "Cognitive maps for guiding iterative reasoning")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster recorded trajectories into a cognitive map.
    BuildMap {
        #[arg(long)]
        trajectories: PathBuf,
        /// Map file to write (default: <out-dir>/map.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Topology statistics plus a graph export.
    Analyze {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        #[arg(long)]
        red_k: Option<usize>,
        #[arg(long)]
        min_success: Option<u64>,
    },
    /// Export the map (or its skeleton) as DOT, GraphML or JSON.
    Export {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        /// Output file (default: <out-dir>/graph.<ext>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only edges with at least `min_success` successes.
        #[arg(long)]
        skeleton: bool,
        #[arg(long)]
        min_success: Option<u64>,
    },
    /// Train the transition navigator on a map's labeled edges.
    TrainNav {
        #[arg(long)]
        map: PathBuf,
        /// Model file to write (default: <out-dir>/navigator.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one question with map guidance.
    Solve {
        #[arg(long)]
        question: String,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Gold answer; when given, the result is scored.
        #[arg(long)]
        gold: Option<String>,
    },
    /// Solve and score every problem of a dataset against a frozen map.
    BatchEval {
        /// Problems JSONL; defaults to the simulated task's problems with a sim backend.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Field mapping preset: gsm8k or math.
        #[arg(long, default_value = "gsm8k")]
        fields: String,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Online learning rounds: solve, ingest, persist the map, retrain the navigator.
    LearnLoop {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "gsm8k")]
        fields: String,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Starting map (default: empty).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Generate a synthetic trajectory corpus, or a simulated task with --task.
    Simulate {
        /// SimConfig or TaskConfig as JSON; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        task: bool,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_concepts: Option<usize>,
        #[arg(long)]
        vortex_size: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Output file (default: <out-dir>/trajectories.jsonl or problems.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch evaluation across intervention probabilities.
    Sweep {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "gsm8k")]
        fields: String,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.6,0.7")]
        p_values: Vec<f64>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildMap { .. } => "build-map",
            Command::Analyze { .. } => "analyze",
            Command::Export { .. } => "export",
            Command::TrainNav { .. } => "train-nav",
            Command::Solve { .. } => "solve",
            Command::BatchEval { .. } => "batch-eval",
            Command::LearnLoop { .. } => "learn-loop",
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Writes log lines to stderr and to the run log.
struct Tee(File);

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stderr().write_all(buf)?;
        self.0.write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stderr().flush()?;
        self.0.flush()
    }
}

fn init_logging(cfg: &RunConfig) -> anyhow::Result<()> {
    let log = File::create(cfg.out_dir.join("run.log"))?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Pipe(Box::new(Tee(log))))
        .try_init()?;
    Ok(())
}

fn snapshot(cfg: &RunConfig, command: &Command) -> anyhow::Result<()> {
    let body = json!({
        "command": command.name(),
        "arguments": format!("{command:?}"),
        "config": cfg,
    });
    fs::write(cfg.out_dir.join("config.json"), serde_json::to_string_pretty(&body)?)?;
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match RunConfig::resolve(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let run = || -> anyhow::Result<()> {
        fs::create_dir_all(&cfg.out_dir)?;
        init_logging(&cfg)?;
        snapshot(&cfg, &cli.command)?;
        commands::run(&cfg, &cli.command)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = describe(&e);
            if log::log_enabled!(log::Level::Error) {
                log::error!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(2)
        }
    }
}
