//! JSON experiment configuration: schema, validation, and resolution into a
//! runnable `Experiment`.

use super::HarnessError;
use crate::costgen::CostProcess;
use crate::dogd::{derive_hyperparams, DykstraSettings, HyperParams};
use crate::matlin::{sym_eig, SymMatrix};
use crate::network::{cycle_topology, validate as validate_topology, MixingMatrix};
use crate::plant::SystemModel;
use crate::policy::{check_strong_stability, StabilityVerdict};
use crate::regret::{BenchmarkSpec, Experiment};
use crate::sdp::FeasibleSetSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Name of the built-in instance: the 5-agent cycle of 3-state plants the
/// acceptance experiments run on.
pub const REFERENCE_PRESET: &str = "reference";

/// The default horizon multiplier applied to the theoretical floor when no
/// explicit `T` is given.
pub const DEFAULT_T_MULTIPLIER: f64 = 30.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma2: f64,
    pub lambda2: f64,
    pub system: SystemConfig,
    pub topology: TopologyConfig,
    #[serde(rename = "T", default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub t_multiplier: Option<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub dykstra: DykstraSettings,
    #[serde(default = "default_eps_psd")]
    pub eps_psd: f64,
    pub benchmark: BenchmarkConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_runs() -> usize {
    30
}

fn default_seed() -> u64 {
    42
}

fn default_eps_psd() -> f64 {
    1e-25
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Plant matrices: the named preset or explicit nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Preset(String),
    Explicit {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        w: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyConfig {
    Cycle { self_weight: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchmarkConfig {
    Preset(String),
    Matrix { ks: Vec<Vec<f64>> },
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        context: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config {
        context: format!("{}: {e}", path.display()),
    })
}

fn nested_to_matrix(field: &str, rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(HarnessError::Config {
            context: format!("{field}: expected a {nr}x{nc} nested array"),
        });
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn resolve_system(config: &ExperimentConfig) -> Result<(DMatrix<f64>, DMatrix<f64>, SymMatrix)> {
    match &config.system {
        SystemConfig::Preset(name) if name == REFERENCE_PRESET => {
            if config.d != config.k {
                return Err(HarnessError::Config {
                    context: format!(
                        "system: the {REFERENCE_PRESET} preset needs d == k, got d = {}, k = {}",
                        config.d, config.k
                    ),
                });
            }
            let d = config.d;
            Ok((
                DMatrix::identity(d, d) * 0.2,
                DMatrix::identity(d, d) * (0.4 / 1.5),
                SymMatrix::identity(d),
            ))
        }
        SystemConfig::Preset(name) => Err(HarnessError::Config {
            context: format!("system: unknown preset {name:?}, only {REFERENCE_PRESET:?} exists"),
        }),
        SystemConfig::Explicit { a, b, w } => {
            let a = nested_to_matrix("system.a", a, config.d, config.d)?;
            let b = nested_to_matrix("system.b", b, config.d, config.k)?;
            let w = nested_to_matrix("system.w", w, config.d, config.d)?;
            let w = SymMatrix::new(w).map_err(|e| HarnessError::Config {
                context: format!("system.w: {e}"),
            })?;
            Ok((a, b, w))
        }
    }
}

fn resolve_topology(config: &ExperimentConfig) -> Result<MixingMatrix> {
    let topology = match &config.topology {
        TopologyConfig::Cycle { self_weight } => cycle_topology(config.m, *self_weight)?,
        TopologyConfig::Explicit { matrix } => {
            let p = nested_to_matrix("topology.matrix", matrix, config.m, config.m)?;
            validate_topology(p, 1e-9)?
        }
    };
    if topology.agents() != config.m {
        return Err(HarnessError::Config {
            context: format!(
                "topology: {} agents but m = {}",
                topology.agents(),
                config.m
            ),
        });
    }
    Ok(topology)
}

fn resolve_benchmark(config: &ExperimentConfig) -> Result<DMatrix<f64>> {
    match &config.benchmark {
        BenchmarkConfig::Preset(name) if name == REFERENCE_PRESET => {
            if config.k != config.d {
                return Err(HarnessError::Config {
                    context: format!(
                        "benchmark: the {REFERENCE_PRESET} preset gain is square, got k = {}, d = {}",
                        config.k, config.d
                    ),
                });
            }
            Ok(DMatrix::identity(config.k, config.d) * -0.015)
        }
        BenchmarkConfig::Preset(name) => Err(HarnessError::Config {
            context: format!(
                "benchmark: unknown preset {name:?}, only {REFERENCE_PRESET:?} exists"
            ),
        }),
        BenchmarkConfig::Matrix { ks } => nested_to_matrix("benchmark.ks", ks, config.k, config.d),
    }
}

/// Derived constants recorded alongside the resolved config, including both
/// horizon-floor variants and which one sized the run.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedParams {
    pub nu: f64,
    pub beta: f64,
    pub rho: f64,
    pub t_min_network: f64,
    pub t_min_agent: f64,
    pub t_min_used: &'static str,
    pub horizon_from: &'static str,
    pub t_multiplier: Option<f64>,
    pub t: usize,
    pub eta: f64,
    pub iterate_variation_bound: f64,
    pub benchmark_verified: bool,
}

fn resolve_horizon(config: &ExperimentConfig, hp_unsized: &HyperParams) -> (usize, &'static str, Option<f64>) {
    // Explicit T wins over the multiplier.
    if let Some(t) = config.t {
        return (t, "explicit-T", None);
    }
    let multiplier = config.t_multiplier.unwrap_or(DEFAULT_T_MULTIPLIER);
    let t = (multiplier * hp_unsized.t_min_agent()).ceil().max(1.0) as usize;
    (t, "multiplier", Some(multiplier))
}

/// All static checks plus construction of the runnable experiment.
pub fn resolve(config: &ExperimentConfig) -> Result<(Experiment, DerivedParams)> {
    if config.d == 0 || config.k == 0 {
        return Err(HarnessError::Config {
            context: format!("d = {}, k = {}: both must be at least 1", config.d, config.k),
        });
    }
    let (a, b, w) = resolve_system(config)?;

    // Preconditions that neither FeasibleSetSpec nor derive_hyperparams
    // already enforce: the noise floor and the trace budget on W.
    let w_min = sym_eig(&w)?.min();
    if w_min + 1e-12 * config.sigma2.max(1.0) < config.sigma2 {
        return Err(HarnessError::Config {
            context: format!(
                "system.w: min eigenvalue {w_min} under the noise floor sigma2 = {}",
                config.sigma2
            ),
        });
    }
    if w.trace() > config.lambda2 * (1.0 + 1e-12) {
        return Err(HarnessError::Config {
            context: format!(
                "system.w: trace {} exceeds lambda2 = {}",
                w.trace(),
                config.lambda2
            ),
        });
    }

    let topology = resolve_topology(config)?;
    let hp_unsized = derive_hyperparams(
        config.kappa,
        config.gamma,
        config.c,
        config.sigma2,
        config.lambda2,
        config.m,
        topology.beta(),
        None,
    )?;
    let (t, horizon_from, t_multiplier) = resolve_horizon(config, &hp_unsized);
    let hp = derive_hyperparams(
        config.kappa,
        config.gamma,
        config.c,
        config.sigma2,
        config.lambda2,
        config.m,
        topology.beta(),
        Some(t),
    )?;

    let ks = resolve_benchmark(config)?;
    let certificate = check_strong_stability(&ks, &a, &b, config.kappa, config.gamma)?;
    let verified = match certificate.verdict {
        StabilityVerdict::Valid => true,
        StabilityVerdict::Indeterminate => {
            log::warn!(
                "benchmark gain has a defective closed loop; running it unverified"
            );
            false
        }
        StabilityVerdict::Invalid => {
            return Err(HarnessError::BenchmarkRejected {
                context: format!(
                    "gain norm {:.6} (ok: {}), contraction {:?} (ok: {:?}), conditioning {:?} (ok: {:?})",
                    certificate.gain_norm,
                    certificate.gain_ok,
                    certificate.l_norm,
                    certificate.contraction_ok,
                    certificate.h_cond,
                    certificate.conditioning_ok,
                ),
            });
        }
    };

    let model = SystemModel::new(a.clone(), b.clone(), w.clone())?;
    let feasible = FeasibleSetSpec::new(a, b, w, hp.nu(), config.sigma2)?;

    let derived = DerivedParams {
        nu: hp.nu(),
        beta: hp.beta(),
        rho: hp.rho(),
        t_min_network: hp.t_min_network(),
        t_min_agent: hp.t_min_agent(),
        t_min_used: "agent",
        horizon_from,
        t_multiplier,
        t,
        eta: hp.eta().unwrap(),
        iterate_variation_bound: hp.iterate_variation_bound().unwrap(),
        benchmark_verified: verified,
    };

    let experiment = Experiment {
        model,
        feasible,
        topology,
        hp,
        costs: CostProcess::UniformDiagonal {
            c: config.c,
            d: config.d,
            k: config.k,
        },
        benchmark: BenchmarkSpec {
            ks,
            description: match &config.benchmark {
                BenchmarkConfig::Preset(name) => format!("{name} preset gain"),
                BenchmarkConfig::Matrix { .. } => "configured gain".into(),
            },
            verified,
        },
        dykstra: config.dykstra,
        eps_psd: config.eps_psd,
        master_seed: config.master_seed,
        runs: config.runs,
    };
    experiment.validate()?;

    Ok((experiment, derived))
}

/// One static check's outcome, for the report-only command.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// Run every load-time check independently, so a report lists all failures
/// rather than stopping at the first.
pub fn validation_report(config: &ExperimentConfig) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let mut push = |name: &str, outcome: std::result::Result<String, String>| match outcome {
        Ok(detail) => checks.push(CheckResult {
            name: name.into(),
            ok: true,
            detail,
        }),
        Err(detail) => checks.push(CheckResult {
            name: name.into(),
            ok: false,
            detail,
        }),
    };

    push(
        "hyper-parameter ranges",
        derive_hyperparams(
            config.kappa,
            config.gamma,
            config.c,
            config.sigma2,
            config.lambda2,
            config.m,
            0.0,
            config.t,
        )
        .map(|hp| format!("nu = {}", hp.nu()))
        .map_err(|e| e.to_string()),
    );

    let system = resolve_system(config);
    push(
        "system matrices",
        system
            .as_ref()
            .map(|s| {
                format!(
                    "A {}x{}, B {}x{}",
                    s.0.nrows(),
                    s.0.ncols(),
                    s.1.nrows(),
                    s.1.ncols()
                )
            })
            .map_err(|e| e.to_string()),
    );

    if let Ok((a, b, w)) = &system {
        push(
            "noise floor W >= sigma2 I",
            sym_eig(w)
                .map_err(|e| e.to_string())
                .and_then(|eig| {
                    let min = eig.min();
                    if min + 1e-12 * config.sigma2.max(1.0) >= config.sigma2 {
                        Ok(format!("min eigenvalue {min}"))
                    } else {
                        Err(format!(
                            "min eigenvalue {min} under sigma2 = {}",
                            config.sigma2
                        ))
                    }
                }),
        );
        push(
            "noise trace Tr(W) <= lambda2",
            if w.trace() <= config.lambda2 * (1.0 + 1e-12) {
                Ok(format!("trace {}", w.trace()))
            } else {
                Err(format!(
                    "trace {} exceeds lambda2 = {}",
                    w.trace(),
                    config.lambda2
                ))
            },
        );
        push(
            "benchmark strong stability",
            resolve_benchmark(config)
                .map_err(|e| e.to_string())
                .and_then(|ks| {
                    check_strong_stability(&ks, a, b, config.kappa, config.gamma)
                        .map_err(|e| e.to_string())
                })
                .and_then(|cert| match cert.verdict {
                    StabilityVerdict::Valid => Ok(format!(
                        "valid: gain norm {:.6}, contraction {:?}, conditioning {:?}",
                        cert.gain_norm, cert.l_norm, cert.h_cond
                    )),
                    StabilityVerdict::Indeterminate => {
                        Ok("indeterminate: defective closed loop, flagged unverified".into())
                    }
                    StabilityVerdict::Invalid => Err(format!(
                        "invalid: gain norm {:.6} (ok: {}), contraction {:?} (ok: {:?}), conditioning {:?} (ok: {:?})",
                        cert.gain_norm,
                        cert.gain_ok,
                        cert.l_norm,
                        cert.contraction_ok,
                        cert.h_cond,
                        cert.conditioning_ok,
                    )),
                }),
        );
    }

    push(
        "topology",
        resolve_topology(config)
            .map(|p| format!("{} agents, beta = {}", p.agents(), p.beta()))
            .map_err(|e| match e {
                HarnessError::Network(crate::network::NetworkError::Disconnected {
                    components,
                }) => format!("graph splits into {components} components"),
                other => other.to_string(),
            }),
    );

    checks
}

/// Stable serialization of the resolved parameters with a content hash over
/// the document body, so identical experiments produce identical files.
pub fn params_json(config: &ExperimentConfig, derived: &DerivedParams) -> Result<String> {
    #[derive(Serialize)]
    struct Body<'a> {
        config: &'a ExperimentConfig,
        derived: &'a DerivedParams,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a ExperimentConfig,
        derived: &'a DerivedParams,
        content_hash: String,
    }
    let body = serde_json::to_string(&Body { config, derived })?;
    let hash: String = Sha256::digest(body.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let doc = Doc {
        config,
        derived,
        content_hash: hash,
    };
    Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
}
