//! `rpflab`: run experiments from a JSON config and write JSON/CSV reports.

mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use rpflab_core::config::{validate_structure, ExperimentConfig};
use rpflab_core::LabError;
use serde_json::json;
use sha2::{Digest, Sha256};

use output::Curves;
use run::{Outcome, Run, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "rpflab", version, about = "Transfer operators and contraction certificates for random Markov shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// RPF triple, residuals, Gibbs band and pressure.
    Rpf(RunArgs),
    /// Contraction certificate, block ratios and decay of L̃ⁿf.
    Contract(RunArgs),
    /// Products of random positive matrices.
    Matrices(RunArgs),
    /// ψ-mixing coefficients.
    Mixing(RunArgs),
    /// Decay of correlations.
    Correlations(RunArgs),
    /// Entropy + ∫φ dν against the pressure.
    Equilibrium(RunArgs),
    /// Every experiment applicable to the config.
    All(RunArgs),
    /// Structural checks only.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for replicate seeds.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides depths.working.
    #[arg(long)]
    depth: Option<usize>,
    /// Overrides horizons.decay.
    #[arg(long)]
    horizon: Option<usize>,
    /// Runs seeds seed, seed + 1, … in parallel.
    #[arg(long, default_value_t = 1)]
    replicates: u64,
}

#[derive(Args, Clone)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Driver steps sampled for the base-event frequencies.
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Config problems get exit 2, everything else exit 1.
fn exit_for(e: &LabError) -> u8 {
    match e {
        LabError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_CONFIG);
        }
    };
    let cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: <document>: {e}");
            return Err(EXIT_CONFIG);
        }
    };
    Ok(cfg)
}

fn check_fields(cfg: &ExperimentConfig) -> Result<(), u8> {
    let errors = cfg.field_errors();
    if errors.is_empty() {
        return Ok(());
    }
    for e in &errors {
        eprintln!("{e}");
    }
    Err(EXIT_CONFIG)
}

/// SHA-256 of the effective config in canonical JSON.
fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn run_experiments(args: &RunArgs, which: &[&'static str]) -> u8 {
    let mut cfg = match load(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(d) = args.depth {
        cfg.depths.working = d;
    }
    if let Some(h) = args.horizon {
        cfg.horizons.decay = h;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Err(code) = check_fields(&cfg) {
        return code;
    }
    let hash = config_hash(&cfg);
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let seeds: Vec<u64> = (0..args.replicates.max(1)).map(|i| cfg.seed.wrapping_add(i)).collect();
    let explicit = which.len() == 1;

    let work = |seed: u64| -> u8 { run_seed(&cfg, seed, which, explicit, &hash, &out_dir) };
    let codes: Vec<u8> = match args.jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(|| seeds.par_iter().map(|&s| work(s)).collect()),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return EXIT_FAILED;
            }
        },
        None => seeds.par_iter().map(|&s| work(s)).collect(),
    };
    codes.into_iter().max().unwrap_or(0)
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, which: &[&'static str], explicit: bool, hash: &str, out_dir: &std::path::Path) -> u8 {
    let mut run = match Run::new(cfg, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("seed {seed}: {e}");
            return exit_for(&e);
        }
    };
    let mut code = 0u8;
    for &name in which {
        if name == "matrices" && !explicit && cfg.matrix_family().is_none() {
            continue;
        }
        let outcome = match run.experiment(name) {
            Ok(o) => o,
            Err(e) => {
                let c = exit_for(&e);
                eprintln!("{name} (seed {seed}): {e}");
                code = code.max(c);
                if c == EXIT_CONFIG {
                    continue;
                }
                Outcome { experiment: name, failures: vec![e.to_string()], report: json!(null), curves: Curves::default() }
            }
        };
        match emit(cfg, seed, hash, out_dir, &outcome) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("{name} (seed {seed}): {e:#}");
                code = code.max(EXIT_FAILED);
            }
        }
        if outcome.passed() {
            println!("PASS {name} seed={seed}");
        } else {
            for f in &outcome.failures {
                eprintln!("FAIL {name} seed={seed}: {f}");
            }
            println!("FAIL {name} seed={seed}");
            code = code.max(EXIT_FAILED);
        }
    }
    code
}

fn emit(cfg: &ExperimentConfig, seed: u64, hash: &str, out_dir: &std::path::Path, o: &Outcome) -> anyhow::Result<()> {
    let stem = format!("{}_{}_seed{seed}", cfg.name, o.experiment);
    let doc = json!({
        "config_hash": hash,
        "seed": seed,
        "name": cfg.name,
        "experiment": o.experiment,
        "passed": o.passed(),
        "failures": o.failures,
        "report": o.report,
    });
    output::write(out_dir, &stem, &doc, Some(o.curves.render(hash, seed))).context("writing artifacts")?;
    Ok(())
}

fn validate(args: &ValidateArgs) -> u8 {
    let cfg = match load(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seed = args.seed.unwrap_or(cfg.seed);
    let report = match validate_structure(&cfg, seed, args.steps) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e).max(EXIT_FAILED);
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if let Some(dir) = &args.out_dir {
        let hash = config_hash(&cfg);
        let doc = json!({ "config_hash": hash, "seed": seed, "name": cfg.name, "experiment": "validate", "report": report });
        if let Err(e) = output::write(dir, &format!("{}_validate_seed{seed}", cfg.name), &doc, None) {
            eprintln!("error: {e:#}");
            return EXIT_FAILED;
        }
    }
    if report.valid {
        println!("valid: {}", cfg.name);
        0
    } else {
        println!("invalid: {} ({} violations)", cfg.name, report.violations.len());
        EXIT_FAILED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Rpf(a) => run_experiments(a, &["rpf"]),
        Command::Contract(a) => run_experiments(a, &["contract"]),
        Command::Matrices(a) => run_experiments(a, &["matrices"]),
        Command::Mixing(a) => run_experiments(a, &["mixing"]),
        Command::Correlations(a) => run_experiments(a, &["correlations"]),
        Command::Equilibrium(a) => run_experiments(a, &["equilibrium"]),
        Command::All(a) => run_experiments(a, &EXPERIMENTS),
        Command::Validate(a) => validate(a),
    };
    ExitCode::from(code)
}
