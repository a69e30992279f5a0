use clap::{Parser, Subcommand};
use dolq::exec::Mode;
use dolq::harness::{
    cmd_simulate, derive_params_json, derive_params_text, load_config, resolve,
    validation_report, HarnessError,
};
use dolq::matlin::SymMatrix;
use dolq::sdp::{dykstra_project, is_feasible};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dolq", version, about = "Distributed online LQ control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the constants derived from a config: nu, beta, rho, both
    /// horizon floors, and the step size for the resolved T.
    DeriveParams {
        #[arg(long)]
        config: PathBuf,
        /// Emit machine-readable JSON instead of the text report.
        #[arg(long)]
        json: bool,
    },
    /// Run the Monte Carlo experiment and write the CSV/JSON outputs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of Monte Carlo runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the horizon.
        #[arg(long = "T")]
        t: Option<usize>,
    },
    /// Check a config against every static invariant without simulating.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Project a symmetric matrix onto the feasible set and print the report.
    Project {
        #[arg(long)]
        config: PathBuf,
        /// JSON file holding a (d+k) x (d+k) nested array.
        #[arg(long)]
        matrix: PathBuf,
    },
}

#[cfg(feature = "parallel")]
fn init_thread_pool() {
    let Ok(raw) = std::env::var("DOLQ_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not apply DOLQ_THREADS={n}: {e}");
            }
        }
        _ => log::warn!("DOLQ_THREADS={raw:?} is not a positive integer, ignoring it"),
    }
}

#[cfg(not(feature = "parallel"))]
fn init_thread_pool() {}

fn main() -> ExitCode {
    env_logger::init();
    init_thread_pool();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::DeriveParams { config, json } => {
            let config = load_config(&config)?;
            let (_, derived) = resolve(&config)?;
            if json {
                print!("{}", derive_params_json(&derived)?);
            } else {
                print!("{}", derive_params_text(&derived));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config: path,
            seed,
            out,
            runs,
            t,
        } => {
            let mut config = load_config(&path)?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            if let Some(runs) = runs {
                config.runs = runs;
            }
            if let Some(t) = t {
                config.t = Some(t);
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            let (exp, derived) = resolve(&config)?;
            let out_dir = config.output_dir.clone();
            let files = cmd_simulate(&exp, &config, &derived, &out_dir, Mode::auto())?;
            for file in files {
                println!("{}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let config = load_config(&config)?;
            let mut all_ok = true;
            for check in validation_report(&config) {
                println!(
                    "{} {}: {}",
                    if check.ok { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
                all_ok &= check.ok;
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Project { config, matrix } => {
            let config = load_config(&config)?;
            let (exp, _) = resolve(&config)?;
            let rows: Vec<Vec<f64>> =
                serde_json::from_str(&std::fs::read_to_string(&matrix)?)?;
            let n = exp.feasible.state_dim() + exp.feasible.input_dim();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(HarnessError::Config {
                    context: format!("matrix file must hold an {n}x{n} nested array"),
                });
            }
            let sym = SymMatrix::new(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))?;
            let (sigma, report) =
                dykstra_project(&exp.feasible, &sym, exp.dykstra.tol, exp.dykstra.max_sweeps)?;
            let (feasible, _) = is_feasible(&exp.feasible, &sigma, 10.0 * exp.dykstra.tol)?;
            println!("sweeps: {}", report.iterations);
            println!("final change: {:.3e}", report.final_change);
            println!("affine residual: {:.3e}", report.affine_residual);
            println!("min eigenvalue: {:.3e}", report.min_eigenvalue);
            println!("trace: {} (budget {})", report.trace, exp.feasible.nu());
            println!("feasible: {feasible}");
            println!("projected matrix:");
            for i in 0..n {
                let cells: Vec<String> = (0..n)
                    .map(|j| format!("{:.16e}", sigma.matrix().matrix()[(i, j)]))
                    .collect();
                println!("  [{}]", cells.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
