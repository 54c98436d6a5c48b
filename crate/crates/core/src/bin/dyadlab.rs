use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dyadlab::harness::{exit_code_for, run, Command, RunOptions};

/// Dyadic weight and Bloch martingale experiments.
#[derive(Parser)]
#[command(name = "dyadlab", version)]
struct Cli {
    /// JSON config with the command's parameters (and optionally `seed`, `depth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report.json, CSV tables and artifacts.
    #[arg(long, global = true, default_value = "dyadlab-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Tree depth for generated inputs; see the README for what each command does with it.
    #[arg(long, global = true)]
    depth: Option<u32>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// B_p, B_1 and oscillation constants of a tree weight
    Constants,
    /// Rubio de Francia factorization w = w1 w2^(1-p)
    Factorize,
    /// Extend a weight from a dyadic domain to the whole tree
    ExtendDyadic,
    /// Shifted-grid extension of a continuous weight on a union of top halves
    ExtendContinuous,
    /// Predecessor spectrum and θ-averaged dyadic distance
    Average,
    /// Azuma counts and the fitted exponent
    Azuma,
    /// Carleson and trace sums of a point sequence
    Trace,
    /// Build the divergent sequence for Kahane's martingale
    Counterexample,
    /// Run the built-in invariant suite
    Selftest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Constants => Command::Constants,
            Cmd::Factorize => Command::Factorize,
            Cmd::ExtendDyadic => Command::ExtendDyadic,
            Cmd::ExtendContinuous => Command::ExtendContinuous,
            Cmd::Average => Command::Average,
            Cmd::Azuma => Command::Azuma,
            Cmd::Trace => Command::Trace,
            Cmd::Counterexample => Command::Counterexample,
            Cmd::Selftest => Command::Selftest,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("dyadlab: {msg}");
            ExitCode::from(code)
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, (u8, String)> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| (3, e.to_string()))?;
    }
    let (config, base_dir) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| (3, format!("{}: {e}", path.display())))?;
            let value = serde_json::from_str(&text).map_err(|e| (3, format!("{}: {e}", path.display())))?;
            (value, path.parent().map(PathBuf::from).unwrap_or_default())
        }
        None => (serde_json::Value::Null, PathBuf::from(".")),
    };
    let opts = RunOptions { seed: cli.seed, depth: cli.depth, base_dir };
    let command = Command::from(cli.command);
    let started = std::time::Instant::now();
    let report = run(command, &config, &opts).map_err(|e| (exit_code_for(&e) as u8, e.to_string()))?;
    report.write(&cli.out).map_err(|e| (3, e.to_string()))?;
    eprintln!("{command}: wrote {} in {:.1} s", cli.out.join("report.json").display(), started.elapsed().as_secs_f64());
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    Ok(report.exit_code() as u8)
}
