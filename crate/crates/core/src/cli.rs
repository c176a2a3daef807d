//! Command line front end: `run`, `sweep` and `validate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::kpi::{export_csv, write_csv, Sweep};
use crate::scenario::{AllocMode, Duplex, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "agv-sidelink", version, about = "Sidelink resource allocation simulator for AGV groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration and write one CSV row.
    Run(Overrides),
    /// Simulate the cross product of the listed values.
    Sweep(Overrides),
    /// Check a configuration file and print the effective configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Scenario file (TOML); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    mode: Vec<AllocMode>,
    #[arg(long, value_delimiter = ',')]
    agvs: Vec<usize>,
    #[arg(long = "period-ms", value_delimiter = ',')]
    period_ms: Vec<u32>,
    #[arg(long, value_delimiter = ',', num_args = 0..=1, default_missing_value = "true")]
    harq: Vec<bool>,
    #[arg(long, value_delimiter = ',')]
    duplex: Vec<Duplex>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long = "duration-s")]
    duration_s: Option<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ConfigParse(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) if !p.is_file() => Err(Failure::Usage(format!("config file {} not found", p.display()))),
        Some(p) => Ok(ScenarioConfig::from_file(p)?),
    }
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn build_sweep(o: &Overrides, single: bool) -> Result<Sweep, Failure> {
    let mut base = load(o.config.as_deref())?;
    if let Some(d) = o.duration_s {
        base.run.sim_duration_s = d;
    }
    let first_seed = o.seed.unwrap_or(base.run.seed);
    let n_seeds = o.seeds.unwrap_or(1);
    if n_seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let sweep = Sweep {
        modes: or_base(&o.mode, base.mac.alloc_mode),
        agvs: or_base(&o.agvs, base.layout.n_group_agvs),
        periods_ms: or_base(&o.period_ms, base.traffic.packet_period_ms),
        harq: or_base(&o.harq, base.mac.harq_enabled),
        duplex: or_base(&o.duplex, base.mac.duplex),
        seeds: (first_seed..first_seed + n_seeds).collect(),
        base,
    };
    if single && sweep.configs().len() != 1 {
        return Err(Failure::Usage("`run` takes one value per parameter; use `sweep` for lists".into()));
    }
    Ok(sweep)
}

fn execute(o: &Overrides, single: bool) -> Result<(), Failure> {
    let sweep = build_sweep(o, single)?;
    for c in sweep.configs() {
        c.validate()?;
    }
    let records = sweep.run().map_err(Failure::Runtime)?;
    match &o.out {
        Some(path) => export_csv(&records, path).map_err(Failure::Runtime),
        None => write_csv(&records, std::io::stdout().lock()).map_err(Failure::Runtime),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 1 on runtime errors, 2 on usage
/// errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Run(o) => execute(o, true),
        Command::Sweep(o) => execute(o, false),
        Command::Validate { config } => load(Some(config)).map(|cfg| {
            let _ = std::io::stdout().write_all(cfg.to_toml_string().as_bytes());
        }),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
