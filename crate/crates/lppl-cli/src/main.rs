//! `lppl` — calibrate the nested JLS/LPPL bubble models to discounted
//! price series and adjudicate between them.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RunConfig;
use lppl::model::ModelSpec;

#[derive(Parser)]
#[command(
    name = "lppl",
    version,
    about = "Calibration and model-comparison toolkit for the generalized JLS/LPPL bubble models",
    after_help = "Exit codes: 0 success, 1 computational failure, 2 configuration/IO error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration (see the README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of multi-start candidates.
    #[arg(long)]
    n_starts: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Calibrate model specs to the configured window; writes a JSON
    /// report plus residual and model-curve CSVs per spec.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Fit only this spec (M0, M1, M2, M3, M0prime).
        #[arg(long)]
        spec: Option<ModelSpec>,
    },
    /// Fit M0..M3 and run the Wilks test on the five nested pairs.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Residual-reshuffling bootstrap comparison of nested pairs.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        /// Override the number of bootstrap replications.
        #[arg(long)]
        n_reps: Option<usize>,
        /// Override the reshuffle block length (1 = daily).
        #[arg(long)]
        block_len: Option<usize>,
    },
    /// Rolling-window fit + stationarity census over the whole series.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Override the window length in trading days.
        #[arg(long)]
        length: Option<usize>,
        /// Override the window step in trading days.
        #[arg(long)]
        step: Option<usize>,
    },
    /// Generate a synthetic JLS path and export it as a price CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Collate prior JSON outputs in a directory into a Markdown summary.
    Report {
        /// Directory holding the JSON reports.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.n_starts {
        cfg.n_starts = n;
    }
    if let Some(dir) = &common.out_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        // ignore failure if a pool is already installed (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Fit { common, spec } => {
            let cfg = load(&common)?;
            let files = commands::cmd_fit(&cfg, &common.config, spec)?;
            for p in files {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Compare { common } => {
            let cfg = load(&common)?;
            for p in commands::cmd_compare(&cfg, &common.config)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Bootstrap {
            common,
            n_reps,
            block_len,
        } => {
            let cfg = load(&common)?;
            for p in commands::cmd_bootstrap(&cfg, &common.config, n_reps, block_len)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Scan {
            common,
            length,
            step,
        } => {
            let cfg = load(&common)?;
            for p in commands::cmd_scan(&cfg, &common.config, length, step)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Simulate { common } => {
            let cfg = load(&common)?;
            for p in commands::cmd_simulate(&cfg, &common.config)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Report { out_dir } => {
            let p = commands::cmd_report(&out_dir)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
