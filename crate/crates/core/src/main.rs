use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atomlens::config::{Scenario, ScenarioKind};
use atomlens::runner::{self, RunOptions};
use atomlens::{Error, Result};

#[derive(Parser)]
#[command(name = "atomlens", version, about = "Bragg-outcoupled atom laser focusing simulator")]
struct Cli {
    /// Directory for CSV, JSON and snapshot output.
    #[arg(long, global = true, env = "ATOMLENS_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for sweeps; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write a snapshot every this many steps.
    #[arg(long, global = true)]
    snapshot_every: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a free or focus scenario.
    Run { config: PathBuf },
    /// Run every point of the scenario's sweep block.
    Sweep { config: PathBuf },
    /// Find ξ for the scenario's lens and print one CSV row.
    CalibrateXi { config: PathBuf },
    /// Continue a run from a snapshot.
    Resume { snapshot: PathBuf, config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::InvalidParameter { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let opts = RunOptions { out_dir: cli.out_dir.clone(), snapshot_every: cli.snapshot_every };
    match cli.command {
        Command::Run { config } => {
            let scn = Scenario::load(&config)?;
            if scn.kind == ScenarioKind::CalibrateXi {
                return Err(Error::config("kind", "use the calibrate-xi command for this scenario"));
            }
            let report = runner::run_scenario(&scn, &opts)?;
            print_summary(&report);
        }
        Command::Sweep { config } => {
            let scn = Scenario::load(&config)?;
            let workers = cli
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = runner::sweep(&scn, &opts, workers)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            if opts.out_dir.is_none() {
                let axes: Vec<String> = scn.sweep.iter().flat_map(|s| s.axes.iter().map(|a| a.path.clone())).collect();
                runner::write_sweep(std::io::stdout().lock(), axes.iter().map(String::as_str), &rows)?;
            }
            log::info!("{} points, {} failed", rows.len(), failed);
        }
        Command::CalibrateXi { config } => {
            let scn = Scenario::load(&config)?;
            let result = runner::calibrate(&scn)?;
            runner::write_calibration(std::io::stdout().lock(), &result)?;
            if let Some(dir) = &opts.out_dir {
                std::fs::create_dir_all(dir)?;
                runner::write_calibration(std::fs::File::create(dir.join("calibrate.csv"))?, &result)?;
            }
        }
        Command::Resume { snapshot, config } => {
            let scn = Scenario::load(&config)?;
            let report = runner::resume(&snapshot, &scn, &opts)?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn print_summary(report: &runner::RunReport) {
    let s = &report.stats;
    eprintln!("{} steps to t = {:.6e} s in {:.1} s", s.steps, s.t_final_s, s.wall_time_s);
    if let Some(f) = &report.focus {
        println!("fwhm_m,peak_density_per_um2,n_beam,fit_residual");
        println!("{},{},{},{}", f.fwhm_m, f.peak_density_per_um2, f.n_beam, f.fit_residual);
    } else if let Some(r) = report.rows.last() {
        println!("t_s,z_center_m,dx_m,dvx_m_s,m2,n_beam");
        println!("{},{},{},{},{},{}", r.t_s, r.z_center_m, r.dx_m, r.dvx_m_s, r.m2, r.n_beam);
    }
}
