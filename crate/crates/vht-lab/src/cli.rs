//! Command-line front end.
//!
//! `vht-lab <command> --config <path> [--seed N] [--out DIR] [--check]`
//!
//! Exit status: 0 on success (and all checks passing), 1 on check failure,
//! 2 on configuration or I/O errors.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ScenarioConfig;
use crate::experiments;

#[derive(Parser)]
#[command(
    name = "vht-lab",
    about = "Deterministic dual-oscillator timekeeping experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (sectioned key=value; see configs/ for examples)
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Evaluate the command's acceptance checks and reflect them in the exit
    /// status
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo jitter propagation through the dual-timer timestamping
    McJitter(Common),
    /// Interval jitter of each clock under test across a span sweep
    IntervalJitter(Common),
    /// Race-condition census under the configured ISR latency
    RaceCensus(Common),
    /// Closed-loop skew-correction settling under constant skew
    Settle(Common),
    /// Controller design-space exploration
    ControllerDse(Common),
    /// Capture/compare channel ledger for both schemes
    Resources(Common),
    /// Deep-sleep fractions and average current
    Duty(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::McJitter(_) => "mc-jitter",
            Command::IntervalJitter(_) => "interval-jitter",
            Command::RaceCensus(_) => "race-census",
            Command::Settle(_) => "settle",
            Command::ControllerDse(_) => "controller-dse",
            Command::Resources(_) => "resources",
            Command::Duty(_) => "duty",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::McJitter(c)
            | Command::IntervalJitter(c)
            | Command::RaceCensus(c)
            | Command::Settle(c)
            | Command::ControllerDse(c)
            | Command::Resources(c)
            | Command::Duty(c) => c,
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let name = cli.command.name();
    let common = cli.command.common();

    let text = match fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", common.config.display());
            return 2;
        }
    };
    let mut cfg = match ScenarioConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }

    let output = match experiments::run_command(name, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{name}: {e}");
            return 2;
        }
    };

    if let Err(e) = fs::create_dir_all(&common.out) {
        eprintln!("cannot create {}: {e}", common.out.display());
        return 2;
    }
    for (file, contents) in &output.csv {
        let path = common.out.join(file);
        if let Err(e) = fs::write(&path, contents) {
            eprintln!("cannot write {}: {e}", path.display());
            return 2;
        }
        println!("wrote {}", path.display());
    }
    print!("{}", output.summary);

    if common.check {
        print!("{}", output.checks.render());
        if !output.checks.all_pass() {
            return 1;
        }
    }
    0
}
