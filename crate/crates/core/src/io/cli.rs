//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on numerical
//! divergence. `NCH_THREADS` sets the worker-thread count for parallel
//! convergence runs (default: available parallelism).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{self, PowerLawFit};
use crate::grid::Grid;
use crate::io::{self, RunConfig};
use crate::kernel;

pub const THREADS_ENV: &str = "NCH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "nch", version, about = "Nonlocal Cahn-Hilliard spectral solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a configuration, writing energy.csv and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temporal convergence study against a fine-step benchmark.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coarsening run followed by a power-law fit of the energy.
    Coarsen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report kernel facts (J*1, gamma0, second moment, symbol sign) as JSON.
    KernelCheck {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        /// Grid points per direction.
        #[arg(long)]
        nx: usize,
        /// Domain half-width.
        #[arg(long = "X")]
        x: f64,
        #[arg(long, default_value_t = 1)]
        image_range: usize,
    },
    /// Fit E(t) ~ b_e t^m_e on an energy CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        tmin: f64,
        #[arg(long)]
        tmax: f64,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { 0 } else { 1 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                2
            } else {
                1
            }
        }
    }
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = io::parse_config(&config)?;
            simulate(&cfg, &out_dir(&cfg, out)?, false)
        }
        Command::Coarsen { config, out } => {
            let cfg = io::parse_config(&config)?;
            simulate(&cfg, &out_dir(&cfg, out)?, true)
        }
        Command::Converge { config, out } => {
            let cfg = io::parse_config(&config)?;
            let dir = out_dir(&cfg, out)?;
            let table = experiments::convergence_study(&cfg.to_convergence()?)?;
            let mut csv = String::from("dt,steps,l2_error,observed_rate,failure\n");
            println!("{:>14} {:>7} {:>14} {:>8}", "dt", "steps", "l2_error", "rate");
            for r in &table.rows {
                let err = r.l2_error.map(|e| format!("{e:.16e}")).unwrap_or_default();
                let rate = r.observed_rate.map(|e| format!("{e:.16e}")).unwrap_or_default();
                csv.push_str(&format!(
                    "{:.16e},{},{err},{rate},{}\n",
                    r.dt,
                    r.steps,
                    r.failure.clone().unwrap_or_default()
                ));
                println!(
                    "{:>14.6e} {:>7} {:>14} {:>8}",
                    r.dt,
                    r.steps,
                    r.l2_error.map(|e| format!("{e:.6e}")).unwrap_or_else(|| "-".into()),
                    r.observed_rate.map(|e| format!("{e:.3}")).unwrap_or_else(|| "-".into()),
                );
            }
            fs::write(dir.join("convergence.csv"), csv)?;
            if let Some(order) = table.fitted_order() {
                println!("fitted order: {order:.4}");
            }
            Ok(())
        }
        Command::KernelCheck {
            delta,
            epsilon,
            nx,
            x,
            image_range,
        } => {
            let grid = Grid::square(x, nx)?;
            let k = kernel::build_kernel(delta, &grid, image_range)?;
            let report = kernel::verify_conditions(&k, Some(epsilon));
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(())
        }
        Command::Fit { csv, tmin, tmax } => {
            let records = io::read_energy_csv(&csv)?;
            let fit = experiments::fit_power_law(&records, tmin, tmax)?;
            print_fit(&fit);
            Ok(())
        }
    }
}

fn print_fit(fit: &PowerLawFit) {
    println!("{}", serde_json::to_string(fit).expect("fit serializes"));
}

fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:012.4}")
}

/// Shared body of `run` and `coarsen`. Partial outputs are written before a
/// divergence error is returned.
fn simulate(cfg: &RunConfig, dir: &Path, fit: bool) -> Result<()> {
    let out = experiments::coarsening_run(&cfg.to_coarsening()?)?;
    io::write_energy_csv(&out.records, dir.join("energy.csv"))?;
    for (t, field) in &out.snapshots {
        let stem = snapshot_name(*t);
        io::write_snapshot(field, *t, dir.join(format!("{stem}.nchf")))?;
        if cfg.output.pgm {
            io::write_pgm(field, dir.join(format!("{stem}.pgm")))?;
        }
    }
    let last_t = out.records.last().map(|r| r.t).unwrap_or(0.0);
    io::write_snapshot(&out.final_state, last_t, dir.join("final.nchf"))?;
    if let Some(e) = out.failure {
        return Err(e);
    }
    if fit {
        let (t_min, t_max) = cfg.fit_window();
        let fit = experiments::fit_power_law(&out.records, t_min, t_max)?;
        fs::write(
            dir.join("fit.json"),
            serde_json::to_string_pretty(&fit).expect("fit serializes"),
        )?;
        print_fit(&fit);
    }
    Ok(())
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::config(e.to_string())
    }
}
