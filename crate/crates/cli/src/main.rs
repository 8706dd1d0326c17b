//! `modhilbert`: batch runner writing CSV tables and a JSON summary per run.
//!
//! Exit status 0 when every pass flag holds, 1 when at least one fails,
//! 2 on a configuration or runtime error (nothing is written then).

mod config;
mod runs;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::value::RawValue;

use config::RunConfig;
use modhilbert_core::acceptance::CriterionOutcome;
use runs::Outcome;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");
const OUT_ENV: &str = "MODHILBERT_OUT";
const DEFAULT_OUT: &str = "modhilbert-out";

#[derive(Parser)]
#[command(name = "modhilbert", version, about = "Experiments on modulated discrete Hilbert kernels")]
struct Cli {
    /// JSON run configuration; the shipped default is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Overrides MODHILBERT_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Block-measure correlation decay.
    Decay,
    /// Phase admissibility and exponential sum bounds.
    Vdc,
    /// Maximal truncation norms.
    Maximal,
    /// Sparse collections, CZ decompositions, Carleson packing.
    Sparse,
    /// Random kernels: Chernoff tails, correlations, exceptional covers.
    Random,
    /// Rotation tail profiles and transference.
    Ergodic,
    /// The full acceptance suite.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Decay => "decay",
            Command::Vdc => "vdc",
            Command::Maximal => "maximal",
            Command::Sparse => "sparse",
            Command::Random => "random",
            Command::Ergodic => "ergodic",
            Command::All => "all",
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    subcommand: &'a str,
    passed: bool,
    exit_code: u8,
    seed: u64,
    seed_override: Option<u64>,
    config: &'a RawValue,
    tables: BTreeMap<&'a str, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance: Option<&'a [CriterionOutcome]>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("modhilbert {}: {msg}", cli.command.name());
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, String> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let raw = RawValue::from_string(text.trim().to_string()).map_err(|e| format!("config: {e}"))?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| format!("config: {e}"))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| format!("threads: {e}"))?;
    }

    let outcome = match cli.command {
        Command::Decay => runs::decay(&cfg),
        Command::Vdc => runs::vdc(&cfg),
        Command::Maximal => runs::maximal(&cfg),
        Command::Sparse => runs::sparse(&cfg),
        Command::Random => runs::random(&cfg),
        Command::Ergodic => runs::ergodic(&cfg),
        Command::All => runs::all(),
    }?;

    let passed = outcome.passed();
    let code = if passed { 0 } else { 1 };
    let dir = output_dir(cli).join(cli.command.name());
    write_artifacts(&dir, cli, &cfg, &raw, &outcome, code)?;
    if let Some(results) = &outcome.acceptance {
        for r in results {
            println!("{r}");
        }
    }
    for (stem, rep) in &outcome.tables {
        println!("{stem:<28} {}", if rep.passed() { "pass" } else { "FAIL" });
    }
    println!("{} -> {}", if passed { "all pass flags hold" } else { "some pass flag failed" }, dir.display());
    Ok(code)
}

fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

fn write_artifacts(
    dir: &Path,
    cli: &Cli,
    cfg: &RunConfig,
    raw: &RawValue,
    outcome: &Outcome,
    code: u8,
) -> Result<(), String> {
    let io = |e: std::io::Error| format!("writing {}: {e}", dir.display());
    fs::create_dir_all(dir).map_err(io)?;
    for (stem, rep) in &outcome.tables {
        let file = fs::File::create(dir.join(format!("{stem}.csv"))).map_err(io)?;
        rep.write_csv(std::io::BufWriter::new(file)).map_err(|e| e.to_string())?;
    }
    if let Some(results) = &outcome.acceptance {
        write_acceptance(dir, results)?;
    }
    let summary = Summary {
        subcommand: cli.command.name(),
        passed: code == 0,
        exit_code: code,
        seed: cfg.seed,
        seed_override: cli.seed,
        config: raw,
        tables: outcome.tables.iter().map(|(s, r)| (s.as_str(), r.summary())).collect(),
        acceptance: outcome.acceptance.as_deref(),
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    json.push('\n');
    fs::File::create(dir.join("summary.json")).and_then(|mut f| f.write_all(json.as_bytes())).map_err(io)
}

fn write_acceptance(dir: &Path, results: &[CriterionOutcome]) -> Result<(), String> {
    let csv_err = |e: csv::Error| format!("writing acceptance tables: {e}");
    let mut w = csv::Writer::from_path(dir.join("acceptance.csv")).map_err(csv_err)?;
    w.write_record(["id", "name", "passed", "detail"]).map_err(csv_err)?;
    for r in results {
        w.write_record([r.id.to_string(), r.name.clone(), (r.passed as u8).to_string(), r.detail.clone()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| e.to_string())?;
    let mut m = csv::Writer::from_path(dir.join("acceptance_metrics.csv")).map_err(csv_err)?;
    m.write_record(["id", "metric", "value"]).map_err(csv_err)?;
    for r in results {
        for (k, v) in &r.metrics {
            m.write_record([r.id.to_string(), k.clone(), v.to_string()]).map_err(csv_err)?;
        }
    }
    m.flush().map_err(|e| e.to_string())
}
