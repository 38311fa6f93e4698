use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use windval_core::config::RunConfig;
use windval_core::pipeline::{
    cmd_capacity_check, cmd_clean, cmd_report, cmd_simulate, cmd_validate, CleanOptions, Layout,
};
use windval_core::synth::{write_fixture, FixtureOptions};
use windval_core::{Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(
    name = "windval",
    version,
    about = "Simulate wind power from reanalysis fields and validate it against observations"
)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "windval.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate generation for every fleet record, dataset and correction.
    Simulate,
    /// Clean observed series and write removal reports.
    Clean {
        /// Also write raw and cleaned values side by side per series.
        #[arg(long)]
        audit: bool,
    },
    /// Compute the metric grid and boxplot statistics.
    Validate,
    /// Compare cumulative fleet capacity with a yearly reference.
    CapacityCheck {
        /// Fleet CSV; defaults to the configured fleet.
        #[arg(long)]
        fleet: Option<PathBuf>,
        /// Reference CSV with year,capacity_mw; defaults to the configured one.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Output CSV; defaults to capacity_ratio.csv in the output dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize outputs of the other steps as markdown.
    Report,
    /// Write a small synthetic input set and config into a directory.
    Fixture { dir: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Internal => 4,
    }
}

fn load(path: &Path) -> Result<(RunConfig, usize)> {
    let cfg = RunConfig::load(path)?;
    let workers = cfg.effective_workers()?;
    info!("config {} (hash {}), {workers} workers", path.display(), cfg.hash);
    Ok((cfg, workers))
}

fn capacity_check(
    config: &Path,
    fleet: Option<PathBuf>,
    reference: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (fleet, reference, out) = match (fleet, reference, out) {
        (Some(f), Some(r), Some(o)) => (f, r, o),
        (f, r, o) => {
            let cfg = RunConfig::load(config)?;
            let reference = r.or(cfg.reference_capacity.clone()).ok_or_else(|| {
                Error::Config("no reference capacity: pass --reference or set paths.reference_capacity".into())
            })?;
            (
                f.unwrap_or(cfg.fleet),
                reference,
                o.unwrap_or_else(|| Layout::new(&cfg.output_dir).capacity_ratio()),
            )
        }
    };
    let rows = cmd_capacity_check(&fleet, &reference, &out)?;
    for r in rows.iter().filter(|r| !r.flag.is_empty()) {
        warn!("year {}: {}", r.year, r.flag);
    }
    println!("{} years written to {}", rows.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate => {
            let (cfg, workers) = load(&cli.config)?;
            let s = cmd_simulate(&cfg, workers)?;
            for w in &s.warnings {
                warn!("{w}");
            }
            println!("{} series written to {}", s.files_written, cfg.output_dir.display());
        }
        Command::Clean { audit } => {
            let (cfg, workers) = load(&cli.config)?;
            let s = cmd_clean(&cfg, workers, CleanOptions { audit })?;
            println!("{} series kept, {} dropped", s.kept.len(), s.dropped.len());
        }
        Command::Validate => {
            let (cfg, workers) = load(&cli.config)?;
            let s = cmd_validate(&cfg, workers)?;
            println!(
                "{} metric rows written to {}",
                s.rows.len(),
                Layout::new(&cfg.output_dir).metrics().display()
            );
        }
        Command::CapacityCheck { fleet, reference, out } => capacity_check(&cli.config, fleet, reference, out)?,
        Command::Report => {
            let cfg = RunConfig::load(&cli.config)?;
            println!("{}", cmd_report(&cfg)?.display());
        }
        Command::Fixture { dir } => {
            let paths = write_fixture(&dir, &FixtureOptions::default())?;
            println!("{}", paths.config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
