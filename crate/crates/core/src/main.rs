//! Command-line front end for the double-cavity sweep library.

use clap::{Args, Parser, Subcommand};
use double_cavity::scenario::{
    compare_runs, run_scan, run_scenario, scenario_reflectivity, step_halving_check, Scenario,
    ScenarioSpec, write_quantum_csv, write_spectrum_csv,
};
use double_cavity::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "double-cavity", version, about = "Membrane-in-the-middle cavity sweep simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid scans
    #[arg(long)]
    jobs: Option<usize>,
    /// Re-run at halved step size and report convergence shifts
    #[arg(long)]
    seed_check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the crossing pair's frequencies over a displacement range
    SolveSpectrum(RunArgs),
    /// Integrate the configured sweep with every requested scheme
    Sweep(RunArgs),
    /// Sweep over a grid of speeds and membrane strengths
    Scan(RunArgs),
    /// Difference metrics between two sweep CSVs
    Compare {
        /// First sweep CSV
        run_a: PathBuf,
        /// Second sweep CSV
        run_b: PathBuf,
    },
    /// Tabulate quantum Hamiltonian coefficients over the sweep range
    QuantumCoeffs(RunArgs),
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(args: &RunArgs) -> Result<Scenario, Error> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::InvalidInput("--jobs must be at least 1".into()));
        }
        // Ignore the error if a pool already exists (e.g. repeated calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    ScenarioSpec::from_path(&args.config)?.resolve()
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveSpectrum(args) => {
            let sc = load(&args)?;
            let path = write_spectrum_csv(&sc, &args.out)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep(args) => {
            let sc = load(&args)?;
            if args.seed_check {
                let checks = step_halving_check(&sc)?;
                let mut worst: f64 = 0.0;
                for c in &checks {
                    println!("{}", serde_json::to_string(c).unwrap());
                    worst = worst.max(c.max_pop_shift).max(c.max_energy_shift);
                }
                if worst > 1e-6 {
                    return Err(Error::Numerical(format!(
                        "step-halving shift {worst:.3e} exceeds 1e-6"
                    )));
                }
            }
            let summaries = run_scenario(&sc, &args.out)?;
            for s in &summaries {
                println!("{}", serde_json::to_string(s).unwrap());
            }
        }
        Command::Scan(args) => {
            let sc = load(&args)?;
            let summaries = run_scan(&sc, &args.out)?;
            for s in &summaries {
                println!("{}", serde_json::to_string(s).unwrap());
            }
        }
        Command::Compare { run_a, run_b } => {
            let metrics = compare_runs(&run_a, &run_b)?;
            println!("{}", serde_json::to_string(&metrics).unwrap());
        }
        Command::QuantumCoeffs(args) => {
            let sc = load(&args)?;
            let (path, suspect) = write_quantum_csv(&sc, &args.out)?;
            if suspect {
                eprintln!(
                    "warning: gap/frequency ratio exceeds 1% somewhere in the range; \
                     the small-gap expansion behind these coefficients is strained"
                );
            }
            println!(
                "wrote {} (membrane reflectivity {:.6})",
                path.display(),
                scenario_reflectivity(&sc)?
            );
        }
    }
    Ok(())
}
