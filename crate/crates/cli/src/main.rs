//! `isctrack`: simulate, sweep and verify the UAV tracking controllers.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad arguments or configuration,
//! 3 a verification check failed.

mod commands;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isctrack_core::{load_config, ControllerKind, Error, InitMode, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "isctrack", version, about = "UAV target tracking with integrated sensing, communication and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write its per-slot trace as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "iscc")]
        controller: ControllerKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run independent trials per controller and write metric CSVs plus a JSON summary.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Comma-separated list of iscc, lqg, noncausal.
        #[arg(long, value_delimiter = ',', default_value = "iscc,lqg,noncausal")]
        controllers: Vec<ControllerKind>,
        /// Trial m uses seed `seed + m`.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the numbered correctness checks and report pass or fail.
    Verify {
        #[command(flatten)]
        common: Common,
        /// jacobian, moments, beamforming, lemmas, convexity, solver, riccati,
        /// closed-loop, determinism, oracles or all.
        #[arg(long, default_value = "all")]
        suite: isctrack_core::verify::Suite,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write the data behind each tracking figure plus a manifest describing the columns.
    ExportPlots {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML scenario file; keys it sets override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario: case1, case2 or case3. Defaults to case2 without --config.
    #[arg(long)]
    preset: Option<String>,
    /// Override a key, e.g. `--set slots=100` or `--set rf.tx_power_dbm=25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Initialization of the target estimate.
    #[arg(long)]
    init: Option<InitMode>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, Failure> {
        let preset = match (&self.preset, &self.config) {
            (Some(p), _) => Some(p.as_str()),
            (None, None) => Some("case2"),
            (None, Some(_)) => None,
        };
        self.load_with(preset, self.init)
    }

    /// Loads with a specific preset and initialization; `--set` overrides still apply.
    pub fn load_with(&self, preset: Option<&str>, init: Option<InitMode>) -> Result<ScenarioConfig, Failure> {
        let mut overrides = self.overrides.clone();
        if let Some(init) = init {
            overrides.push(format!("init={}", init.as_str()));
        }
        load_config(self.config.as_deref(), preset, &overrides).map_err(Failure::from)
    }
}

/// Why a command did not succeed, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    Verification(Vec<u8>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownKey(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
            Failure::Verification(ids) => write!(f, "checks failed: {ids:?}"),
        }
    }
}

/// Caps the global rayon pool from `ISCTRACK_THREADS` when it is a positive integer.
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ISCTRACK_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("ISCTRACK_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { common, controller, seed } => {
            commands::simulate(&common.load()?, &common.out, controller, seed)
        }
        Command::Montecarlo { common, trials, controllers, seed } => {
            commands::montecarlo(&common.load()?, &common.out, &controllers, trials, seed)
        }
        Command::Verify { common, suite, trials, seed } => commands::verify(common.load()?, suite, trials, seed),
        Command::ExportPlots { common, trials, seed } => plots::export(&common, trials, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests print to stdout and succeed; everything else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("isctrack: {f}");
            ExitCode::from(f.code())
        }
    }
}
