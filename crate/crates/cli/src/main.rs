//! `lhz`: seeded pipeline driver. Stages run in order
//! `sample → spectra → group → optimize → evaluate / speedup`, with `library`
//! available once `group` has run. Artifacts land in `--out`; plot data is
//! CSV, structured state JSON.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use artifacts::{CliResult, Workspace};
use config::{Profile, RunConfig};

#[derive(Parser)]
#[command(name = "lhz", version, about = "Annealing-protocol workbench for parity-encoded spin glasses")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON file overriding fields of the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,

    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Replace artifacts of the stage if they exist.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw the instance manifest.
    Sample,
    /// Screen final Hamiltonians and scan minimum gaps.
    Spectra,
    /// Screen hard instances, split train/test and balance the groups.
    Group,
    /// Linear and optimized required times per group.
    Optimize,
    /// Single-instance fidelities of the optimized protocols on both splits.
    Evaluate,
    /// Speed-up table from the optimized times.
    Speedup,
    /// Grow a protocol library on an instance stream.
    Library,
    /// Print the resolved configuration.
    Config,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Spectra => "spectra",
            Command::Group => "group",
            Command::Optimize => "optimize",
            Command::Evaluate => "evaluate",
            Command::Speedup => "speedup",
            Command::Library => "library",
            Command::Config => "config",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.profile, cli.seed)?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        println!("config_hash {}", cfg.hash());
        return Ok(());
    }
    let ws = Workspace::new(cli.out.clone(), cfg, cli.overwrite)?;
    let started = Instant::now();
    let result = match cli.command {
        Command::Sample => commands::sample(&ws),
        Command::Spectra => commands::spectra(&ws),
        Command::Group => commands::group(&ws),
        Command::Optimize => commands::optimize(&ws),
        Command::Evaluate => commands::evaluate(&ws),
        Command::Speedup => commands::speedup(&ws),
        Command::Library => commands::library(&ws),
        Command::Config => unreachable!(),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("exit {}", e.exit_code()),
    };
    ws.note(&format!(
        "{} config_hash={} wall={:.1}s {status}",
        cli.command.name(),
        ws.hash,
        started.elapsed().as_secs_f64()
    ))?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
