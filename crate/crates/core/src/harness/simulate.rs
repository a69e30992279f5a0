//! Experiment execution and serialization: Monte Carlo driving, the four CSV
//! series, the resolved-parameter record, and the failure sentinel.

use super::config::{params_json, DerivedParams, ExperimentConfig};
use super::HarnessError;
use crate::exec::Mode;
use crate::regret::{run_monte_carlo, Experiment, RegretTrace, RoundRecord};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, HarnessError>;

pub const OUTPUT_FILES: [&str; 5] = [
    "regret.csv",
    "regret_sqrt.csv",
    "avg_regret.csv",
    "diagnostics.csv",
    "params.json",
];

/// Dropped into the output directory when a job aborts, so partial outputs
/// are never mistaken for a finished run.
pub const FAILURE_SENTINEL: &str = "FAILED";

/// Full-precision decimal for every float column; 17 significant digits
/// round-trip f64 exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_series(
    path: &Path,
    header: &str,
    traces: &[RegretTrace],
    column: impl Fn(&RegretTrace, usize) -> Vec<f64>,
) -> Result<()> {
    let horizon = traces.first().map_or(0, |tr| tr.cum_regret_mean.len());
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for t in 0..horizon {
        for trace in traces {
            let cells: Vec<String> = column(trace, t).into_iter().map(fmt).collect();
            writeln!(out, "{},{},{}", t + 1, trace.agent_id + 1, cells.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_diagnostics(path: &Path, records: &[Vec<RoundRecord>]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(
        out,
        "t,agent,sweeps,affine_residual,min_eigenvalue,trace,k_norm,iterate_delta"
    )?;
    for (t, round) in records.iter().enumerate() {
        for (agent, rec) in round.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t + 1,
                agent + 1,
                rec.report.iterations,
                fmt(rec.report.affine_residual),
                fmt(rec.report.min_eigenvalue),
                fmt(rec.report.trace),
                fmt(rec.gain_norm),
                fmt(rec.iterate_delta),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_outputs(
    out_dir: &Path,
    config: &ExperimentConfig,
    derived: &DerivedParams,
    traces: &[RegretTrace],
    run0_records: &[Vec<RoundRecord>],
) -> Result<Vec<PathBuf>> {
    let regret = out_dir.join("regret.csv");
    write_series(
        &regret,
        "t,agent,cum_regret_mean,cum_regret_stderr",
        traces,
        |tr, t| vec![tr.cum_regret_mean[t], tr.cum_regret_stderr[t]],
    )?;

    let sqrt = out_dir.join("regret_sqrt.csv");
    write_series(
        &sqrt,
        "t,agent,cum_regret_mean_over_sqrt_t",
        traces,
        |tr, t| vec![tr.regret_per_sqrt_t[t]],
    )?;

    let avg = out_dir.join("avg_regret.csv");
    write_series(
        &avg,
        "t,agent,cum_regret_mean_over_t",
        traces,
        |tr, t| vec![tr.avg_regret[t]],
    )?;

    let diagnostics = out_dir.join("diagnostics.csv");
    write_diagnostics(&diagnostics, run0_records)?;

    let params = out_dir.join("params.json");
    fs::write(&params, params_json(config, derived)?)?;

    Ok(vec![regret, sqrt, avg, diagnostics, params])
}

/// Run the experiment and serialize everything into `out_dir`. Any failure
/// leaves a `FAILED` file there describing the abort.
pub fn cmd_simulate(
    exp: &Experiment,
    config: &ExperimentConfig,
    derived: &DerivedParams,
    out_dir: &Path,
    mode: Mode,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let sentinel = out_dir.join(FAILURE_SENTINEL);
    if sentinel.exists() {
        fs::remove_file(&sentinel)?;
    }

    let attempt = run_monte_carlo(exp, mode)
        .map_err(HarnessError::from)
        .and_then(|out| write_outputs(out_dir, config, derived, &out.traces, &out.run0_records));

    match attempt {
        Ok(files) => Ok(files),
        Err(err) => {
            let _ = fs::write(&sentinel, format!("{err}\n"));
            Err(err)
        }
    }
}

/// Human-readable derive-params report.
pub fn derive_params_text(derived: &DerivedParams) -> String {
    let mut s = String::new();
    s.push_str(&format!("nu                      = {}\n", derived.nu));
    s.push_str(&format!("beta                    = {}\n", derived.beta));
    s.push_str(&format!("rho                     = {}\n", derived.rho));
    s.push_str(&format!(
        "T_min (network form)    = {}\n",
        derived.t_min_network
    ));
    s.push_str(&format!(
        "T_min (per-agent form)  = {}  [used]\n",
        derived.t_min_agent
    ));
    s.push_str(&format!(
        "T                       = {}  (from {}{})\n",
        derived.t,
        derived.horizon_from,
        derived
            .t_multiplier
            .map(|m| format!(" {m}"))
            .unwrap_or_default()
    ));
    s.push_str(&format!("eta                     = {}\n", derived.eta));
    s.push_str(&format!(
        "iterate variation bound = {}\n",
        derived.iterate_variation_bound
    ));
    s.push_str(&format!(
        "benchmark verified      = {}\n",
        derived.benchmark_verified
    ));
    s
}

pub fn derive_params_json(derived: &DerivedParams) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(derived)?))
}
