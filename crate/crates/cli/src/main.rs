//! Command-line interface: run experiment configs, validate them, and
//! cross-check the trajectory engine against the master equation.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical failure,
//! 3 oracle-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jcpulse::experiments::{self, FileConfig, RunOptions};
use jcpulse::units;
use jcpulse::Error;

#[derive(Parser)]
#[command(name = "jcpulse", version, about = "Pulsed photon statistics of a strongly coupled QD-cavity system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write CSV/JSON/SVG
    /// outputs.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides the config's [outputs] dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trajectories per grid point (overrides run.n_traj).
        #[arg(long)]
        n_traj: Option<u64>,
        /// Base RNG seed (overrides run.seed0).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Skip SVG plot emission.
        #[arg(long)]
        no_plots: bool,
    },
    /// Parse and validate a config file, printing the resolved parameters.
    Validate { config: PathBuf },
    /// Run the trajectory-vs-master-equation cross-validation for a config
    /// and print one pass/fail line per detuning.
    OracleCheck {
        config: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
}

fn load(config: &PathBuf) -> Result<(FileConfig, experiments::ResolvedConfig), Error> {
    let file = FileConfig::from_path(config)?;
    let resolved = file.resolve()?;
    Ok((file, resolved))
}

fn print_validation(resolved: &experiments::ResolvedConfig) {
    let p = &resolved.params;
    println!("name: {}", resolved.name);
    println!("kind: {:?}", resolved.kind);
    println!(
        "system: g/2pi = {} GHz, kappa/2pi = {} GHz, gamma/2pi = {} GHz, gamma_d/2pi = {} GHz",
        units::ang_to_ghz(p.g),
        units::ang_to_ghz(p.kappa),
        units::ang_to_ghz(p.gamma),
        units::ang_to_ghz(p.gamma_d),
    );
    println!(
        "pulse: tau_p = {} ps, E0/2pi = {} GHz, window = [{:.4}, {:.4}] ns",
        units::ns_to_ps(resolved.pulse.tau_p),
        units::ang_to_ghz(resolved.pulse.e_peak),
        resolved.pulse.t_start,
        resolved.pulse.t_end,
    );
    println!(
        "sweep: {:?}, {} grid points; n_traj = {}, n_max = {}, seed0 = {}",
        resolved.axis,
        resolved.grid.len(),
        resolved.n_traj,
        resolved.dim.n_max(),
        resolved.seed0,
    );
    if !p.strong_coupling() {
        println!("warning: parameters are outside the strong-coupling regime (g <= kappa/2 or g <= gamma)");
    }
    if let Some(o) = &resolved.optics {
        if let Some(mismatch) = p.q_factor_mismatch(o.q_factor) {
            if mismatch > 0.05 {
                println!(
                    "warning: quoted Q = {} differs from omega_c/2kappa by {:.1}%",
                    o.q_factor,
                    100.0 * mismatch
                );
            }
        }
    }
    println!("outputs: {}", resolved.out_dir.display());
}

fn run() -> Result<bool, Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out, n_traj, seed, threads, no_plots } => {
            init_threads(threads);
            let (_, mut resolved) = load(&config)?;
            if let Some(dir) = out {
                resolved.out_dir = dir;
            }
            if let Some(n) = n_traj {
                resolved.n_traj = n;
                resolved.file.run.n_traj = n;
            }
            if let Some(s) = seed {
                resolved.seed0 = s;
                resolved.file.run.seed0 = s;
            }
            let artifacts =
                experiments::run_experiment(&resolved, &RunOptions { write_plots: !no_plots, quiet: false })?;
            for w in artifacts.warnings() {
                eprintln!("warning: {w}");
            }
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let (_, resolved) = load(&config)?;
            print_validation(&resolved);
            println!("config ok");
            Ok(true)
        }
        Command::OracleCheck { config, threads } => {
            init_threads(threads);
            let (_, resolved) = load(&config)?;
            let report = experiments::oracle_check(&resolved)?;
            print!("{}", report.render());
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
