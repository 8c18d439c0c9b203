//! `eit-echo`: runs echo simulations and studies from a TOML configuration.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical or runtime failure.

mod commands;
mod config;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Run};
use config::{parse_config, KEYS_HELP};

#[derive(Parser)]
#[command(
    name = "eit-echo",
    version,
    about = "All-optical EIT spin echo simulator for inhomogeneous Lambda-system ensembles",
    after_long_help = KEYS_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; omitted keys take their defaults (see --help).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides [run].out; default "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for measurement noise (overrides [run].seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides [run].threads; default all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One echo: trajectory, beat trace and normalized amplitude.
    #[command(after_long_help = KEYS_HELP)]
    Simulate(Common),
    /// Ground-state Bloch vector through the whole sequence.
    #[command(after_long_help = KEYS_HELP)]
    BlochPath(Common),
    /// Tomography of the x-axis, y-axis and rephased states.
    #[command(after_long_help = KEYS_HELP)]
    Qst(Common),
    /// Decay curves over a range of vertical coil fields.
    #[command(after_long_help = KEYS_HELP)]
    FieldSweep(Common),
    /// Decay curves and echo amplitude against temperature.
    #[command(after_long_help = KEYS_HELP)]
    TempScan(Common),
    /// Echo fidelity against optical T2 at constant intensity.
    #[command(after_long_help = KEYS_HELP)]
    Scaling(Common),
    /// Search for the coil field that cancels the ambient field.
    #[command(after_long_help = KEYS_HELP)]
    Compensate(Common),
    /// Check a configuration without running anything.
    #[command(after_long_help = KEYS_HELP)]
    Validate(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::BlochPath(c) => ("bloch-path", c),
            Command::Qst(c) => ("qst", c),
            Command::FieldSweep(c) => ("field-sweep", c),
            Command::TempScan(c) => ("temp-scan", c),
            Command::Scaling(c) => ("scaling", c),
            Command::Compensate(c) => ("compensate", c),
            Command::Validate(c) => ("validate", c),
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (name, common) = cli.command.parts();
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::Invalid(vec![format!("{}: {e}", p.display())]))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(Failure::Invalid)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Invalid(vec!["--threads must be >= 1".into()]));
        }
        cfg.threads = Some(n);
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if name == "validate" {
        println!("configuration is valid");
        return Ok(());
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    let threads = pool.current_num_threads();

    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut run = Run {
        cfg: &cfg,
        out,
        written: Vec::new(),
    };
    pool.install(|| match name {
        "simulate" => commands::simulate(&mut run),
        "bloch-path" => commands::bloch_path(&mut run),
        "qst" => commands::qst(&mut run),
        "field-sweep" => commands::field(&mut run),
        "temp-scan" => commands::temperature(&mut run),
        "scaling" => commands::scaling(&mut run),
        "compensate" => commands::compensate(&mut run),
        _ => unreachable!("every subcommand is dispatched"),
    })?;
    commands::write_manifest(&mut run, name, common.config.as_deref(), &text, threads)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(errors)) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("failed: {e}");
            ExitCode::from(2)
        }
    }
}
