//! Cost accounting: per-round stage costs, cumulative cost per agent,
//! benchmark cost under a fixed gain, and the Monte Carlo regret traces the
//! harness serializes.

use crate::costgen::{CostProcess, CostgenError};
use crate::dogd::{dogd_round, initial_iterate, CostPair, DogdError, DykstraSettings, HyperParams};
use crate::exec::{map_indexed, Mode};
use crate::matlin::{solve_discrete_lyapunov, spectral_radius, MatlinError, SymMatrix};
use crate::network::MixingMatrix;
use crate::plant::{PlantError, SystemModel};
use crate::policy::{extract_policy, PolicyError};
use crate::rng::{stream, Purpose};
use crate::sdp::{FeasibleSetSpec, JointCovariance, ProjectionReport, SdpError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegretError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("experiment not resolved: {context}")]
    Unresolved { context: String },
    #[error("benchmark gain destabilizes the plant: closed-loop spectral radius {radius}")]
    UnstableBenchmark { radius: f64 },
    #[error("round {t}, agent {agent}: {source}")]
    Agent {
        t: usize,
        agent: usize,
        source: Box<RegretError>,
    },
    #[error("round {t}: {source}")]
    Round { t: usize, source: Box<RegretError> },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Dogd(#[from] DogdError),
    #[error(transparent)]
    Cost(#[from] CostgenError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Matlin(#[from] MatlinError),
}

pub type Result<T> = std::result::Result<T, RegretError>;

/// `x' Q x + u' R u`.
pub fn stage_cost(
    x: &DVector<f64>,
    u: &DVector<f64>,
    q: &SymMatrix,
    r: &SymMatrix,
) -> Result<f64> {
    if x.len() != q.dim() || u.len() != r.dim() {
        return Err(RegretError::DimensionMismatch {
            context: format!(
                "state {} vs Q {}, input {} vs R {}",
                x.len(),
                q.dim(),
                u.len(),
                r.dim()
            ),
        });
    }
    Ok(x.dot(&(q.matrix() * x)) + u.dot(&(r.matrix() * u)))
}

/// Stage cost against the summed matrices `Q_t = sum_i Q_{i,t}`,
/// `R_t = sum_i R_{i,t}`: what one agent pays when every agent's cost charges
/// its trajectory.
pub fn network_stage_cost(x: &DVector<f64>, u: &DVector<f64>, costs: &[CostPair]) -> Result<f64> {
    let first = costs.first().ok_or_else(|| RegretError::DimensionMismatch {
        context: "no cost pairs".into(),
    })?;
    let mut q = first.q().clone();
    let mut r = first.r().clone();
    for pair in &costs[1..] {
        q = q.add(pair.q());
        r = r.add(pair.r());
    }
    stage_cost(x, u, &q, &r)
}

/// The fixed comparator gain, with a flag recording whether a strong-stability
/// certificate was checked at configuration time.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub ks: DMatrix<f64>,
    pub description: String,
    pub verified: bool,
}

/// Everything a run needs, resolved and validated once.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: SystemModel,
    pub feasible: FeasibleSetSpec,
    pub topology: MixingMatrix,
    pub hp: HyperParams,
    pub costs: CostProcess,
    pub benchmark: BenchmarkSpec,
    pub dykstra: DykstraSettings,
    pub eps_psd: f64,
    pub master_seed: u64,
    pub runs: usize,
}

impl Experiment {
    pub fn agents(&self) -> usize {
        self.topology.agents()
    }

    /// Rounds per run; `validate` guarantees presence.
    pub fn horizon(&self) -> usize {
        self.hp.t().expect("validated experiment has a resolved horizon")
    }

    pub fn eta(&self) -> f64 {
        self.hp.eta().expect("validated experiment has a resolved step size")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hp.t().is_none() || self.hp.eta().is_none() {
            return Err(RegretError::Unresolved {
                context: "horizon T (and hence eta) missing from hyper-parameters".into(),
            });
        }
        if self.topology.agents() != self.hp.m() {
            return Err(RegretError::DimensionMismatch {
                context: format!(
                    "topology has {} agents, hyper-parameters expect {}",
                    self.topology.agents(),
                    self.hp.m()
                ),
            });
        }
        let (d, k) = (self.model.state_dim(), self.model.input_dim());
        if self.feasible.state_dim() != d || self.feasible.input_dim() != k {
            return Err(RegretError::DimensionMismatch {
                context: format!(
                    "plant is {d}x{k}, feasible set is {}x{}",
                    self.feasible.state_dim(),
                    self.feasible.input_dim()
                ),
            });
        }
        if self.benchmark.ks.nrows() != k || self.benchmark.ks.ncols() != d {
            return Err(RegretError::DimensionMismatch {
                context: format!(
                    "benchmark gain is {}x{}, expected {k}x{d}",
                    self.benchmark.ks.nrows(),
                    self.benchmark.ks.ncols()
                ),
            });
        }
        let (cd, ck) = match &self.costs {
            CostProcess::UniformDiagonal { d, k, .. } => (*d, *k),
            CostProcess::Constant { q, r, .. } => (q.dim(), r.dim()),
            CostProcess::Replay { table, .. } => (table.state_dim(), table.input_dim()),
        };
        if cd != d || ck != k {
            return Err(RegretError::DimensionMismatch {
                context: format!("cost process emits {cd}x{ck}, plant is {d}x{k}"),
            });
        }
        if self.runs == 0 {
            return Err(RegretError::Unresolved {
                context: "runs = 0".into(),
            });
        }
        Ok(())
    }
}

fn standard_normal_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Per-agent per-round numbers the diagnostics file and the invariant suites
/// read off a run.
#[derive(Debug, Clone, Copy)]
pub struct RoundRecord {
    pub report: ProjectionReport,
    pub gain_norm: f64,
    pub closed_loop_radius: f64,
    pub v_min_eig_raw: f64,
    /// Frobenius distance between this round's post-projection iterate and
    /// the previous one.
    pub iterate_delta: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    /// `stage_costs[t][i]`: agent i's network stage cost at round t.
    pub stage_costs: Vec<Vec<f64>>,
    pub records: Vec<Vec<RoundRecord>>,
    pub final_iterates: Vec<JointCovariance>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub stage_costs: Vec<f64>,
    /// State at the start of each round (the one its cost is charged on).
    pub states: Vec<DVector<f64>>,
}

/// One full distributed run: extract, act, observe, step, mix-and-project,
/// for `horizon` rounds. Fully determined by `(master_seed, run_id)`.
pub fn run_algorithm(exp: &Experiment, run_id: u64, mode: Mode) -> Result<AlgorithmRun> {
    exp.validate()?;
    let m = exp.agents();
    let horizon = exp.horizon();
    let eta = exp.eta();
    let d = exp.model.state_dim();
    let warn_floor = exp.feasible.sigma2() / 2.0;

    let init = initial_iterate(&exp.feasible, exp.eps_psd, &exp.dykstra)?;
    let mut iterates = vec![init; m];

    let mut noise_rngs: Vec<_> = (0..m)
        .map(|i| stream(exp.master_seed, run_id, i as u64, Purpose::Noise))
        .collect();
    let mut action_rngs: Vec<_> = (0..m)
        .map(|i| stream(exp.master_seed, run_id, i as u64, Purpose::Action))
        .collect();
    let mut cost_rngs: Vec<_> = (0..m)
        .map(|i| stream(exp.master_seed, run_id, i as u64, Purpose::Cost))
        .collect();
    let mut states: Vec<DVector<f64>> = (0..m)
        .map(|i| {
            let mut rng = stream(exp.master_seed, run_id, i as u64, Purpose::Init);
            standard_normal_vector(d, &mut rng)
        })
        .collect();

    let mut stage_costs = Vec::with_capacity(horizon);
    let mut records = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let mut actions = Vec::with_capacity(m);
        let mut partial = Vec::with_capacity(m);
        for i in 0..m {
            let policy = extract_policy(&iterates[i], exp.eps_psd, warn_floor).map_err(|e| {
                RegretError::Agent {
                    t,
                    agent: i,
                    source: Box::new(e.into()),
                }
            })?;
            let closed_loop = exp.model.a() + exp.model.b() * policy.k();
            partial.push((
                policy.gain_norm(),
                spectral_radius(&closed_loop),
                policy.v_min_eig_raw(),
            ));
            actions.push(policy.sample_action(&states[i], &mut action_rngs[i]));
        }

        let costs: Vec<CostPair> = (0..m)
            .map(|i| {
                exp.costs
                    .next_cost(&mut cost_rngs[i], i, t)
                    .map_err(|e| RegretError::Agent {
                        t,
                        agent: i,
                        source: Box::new(e.into()),
                    })
            })
            .collect::<Result<_>>()?;

        let round_costs: Vec<f64> = (0..m)
            .map(|i| network_stage_cost(&states[i], &actions[i], &costs))
            .collect::<Result<_>>()?;
        stage_costs.push(round_costs);

        let (next, reports) = dogd_round(
            &iterates,
            &costs,
            &exp.topology,
            &exp.feasible,
            eta,
            &exp.dykstra,
            mode,
        )
        .map_err(|e| RegretError::Round {
            t,
            source: Box::new(e.into()),
        })?;

        let round_records: Vec<RoundRecord> = (0..m)
            .map(|i| {
                let delta = next[i].matrix().sub(iterates[i].matrix()).norm_f();
                RoundRecord {
                    report: reports[i],
                    gain_norm: partial[i].0,
                    closed_loop_radius: partial[i].1,
                    v_min_eig_raw: partial[i].2,
                    iterate_delta: delta,
                }
            })
            .collect();
        records.push(round_records);
        iterates = next;

        for i in 0..m {
            let w = exp.model.sample_noise(&mut noise_rngs[i]);
            states[i] = exp
                .model
                .step(&states[i], &actions[i], &w)
                .map_err(|e| RegretError::Agent {
                    t,
                    agent: i,
                    source: Box::new(e.into()),
                })?;
        }
    }

    Ok(AlgorithmRun {
        stage_costs,
        records,
        final_iterates: iterates,
    })
}

/// The comparator: one centralized system under `u = Ks x`, paying the same
/// summed costs. Cost draws replay the algorithm's streams (common random
/// numbers); process noise and the initial state use benchmark-only streams.
pub fn run_benchmark(exp: &Experiment, run_id: u64) -> Result<BenchmarkRun> {
    exp.validate()?;
    let m = exp.agents();
    let horizon = exp.horizon();
    let d = exp.model.state_dim();
    let ks = &exp.benchmark.ks;

    let closed_loop = exp.model.a() + exp.model.b() * ks;
    let radius = spectral_radius(&closed_loop);
    if radius >= 1.0 {
        return Err(RegretError::UnstableBenchmark { radius });
    }

    let mut cost_rngs: Vec<_> = (0..m)
        .map(|i| stream(exp.master_seed, run_id, i as u64, Purpose::Cost))
        .collect();
    let mut noise_rng = stream(exp.master_seed, run_id, 0, Purpose::BenchNoise);
    let mut init_rng = stream(exp.master_seed, run_id, 0, Purpose::BenchInit);
    let mut x = standard_normal_vector(d, &mut init_rng);

    let mut stage_costs = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let costs: Vec<CostPair> = (0..m)
            .map(|i| {
                exp.costs
                    .next_cost(&mut cost_rngs[i], i, t)
                    .map_err(|e| RegretError::Agent {
                        t,
                        agent: i,
                        source: Box::new(e.into()),
                    })
            })
            .collect::<Result<_>>()?;
        let u = ks * &x;
        stage_costs.push(network_stage_cost(&x, &u, &costs)?);
        states.push(x.clone());
        let w = exp.model.sample_noise(&mut noise_rng);
        x = exp.model.step(&x, &u, &w).map_err(|e| RegretError::Round {
            t,
            source: Box::new(e.into()),
        })?;
    }

    Ok(BenchmarkRun {
        stage_costs,
        states,
    })
}

/// The joint covariance a fixed stable gain settles into:
/// `Sigma_xx` solves the closed-loop Lyapunov equation, the other blocks
/// follow as `(X, X Ks'; Ks X, Ks X Ks')`.
pub fn steady_state_covariance(
    ks: &DMatrix<f64>,
    model: &SystemModel,
) -> Result<JointCovariance> {
    let closed_loop = model.a() + model.b() * ks;
    let radius = spectral_radius(&closed_loop);
    if radius >= 1.0 {
        return Err(RegretError::UnstableBenchmark { radius });
    }
    let xx = solve_discrete_lyapunov(&closed_loop, model.w())?;
    let xu = xx.matrix() * ks.transpose();
    let uu = SymMatrix::symmetrize(ks * xx.matrix() * ks.transpose());
    Ok(JointCovariance::from_blocks(&xx, &xu, &uu)?)
}

/// A Monte Carlo regret series for one agent. All per-round indices are
/// 0-based; the `regret/sqrt(t)` and `regret/t` series divide by the 1-based
/// round number.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub agent_id: usize,
    pub stage_cost_mean: Vec<f64>,
    pub cum_cost_mean: Vec<f64>,
    pub cum_regret_mean: Vec<f64>,
    pub cum_regret_stderr: Vec<f64>,
    pub regret_per_sqrt_t: Vec<f64>,
    pub avg_regret: Vec<f64>,
}

/// Average per-round regret over runs, then prefix-sum, so the trace
/// consistency property (`cum[t] - cum[t-1]` equals the mean stage
/// difference) holds exactly in floating point.
pub fn build_traces(
    algorithm: &[AlgorithmRun],
    benchmark: &[BenchmarkRun],
) -> Result<Vec<RegretTrace>> {
    if algorithm.is_empty() || algorithm.len() != benchmark.len() {
        return Err(RegretError::DimensionMismatch {
            context: format!(
                "{} algorithm runs vs {} benchmark runs",
                algorithm.len(),
                benchmark.len()
            ),
        });
    }
    let runs = algorithm.len();
    let horizon = algorithm[0].stage_costs.len();
    let m = algorithm[0].stage_costs.first().map_or(0, Vec::len);
    for (r, (a, b)) in algorithm.iter().zip(benchmark).enumerate() {
        if a.stage_costs.len() != horizon || b.stage_costs.len() != horizon {
            return Err(RegretError::DimensionMismatch {
                context: format!("run {r} has a different horizon"),
            });
        }
        if a.stage_costs.iter().any(|row| row.len() != m) {
            return Err(RegretError::DimensionMismatch {
                context: format!("run {r} has a different agent count"),
            });
        }
    }

    let mut traces = Vec::with_capacity(m);
    for agent in 0..m {
        let mut stage_cost_mean = Vec::with_capacity(horizon);
        let mut cum_cost_mean = Vec::with_capacity(horizon);
        let mut cum_regret_mean = Vec::with_capacity(horizon);
        let mut cum_regret_stderr = Vec::with_capacity(horizon);
        let mut regret_per_sqrt_t = Vec::with_capacity(horizon);
        let mut avg_regret = Vec::with_capacity(horizon);

        let mut cum_cost = 0.0;
        let mut cum_regret = 0.0;
        let mut per_run_cum = vec![0.0f64; runs];

        for t in 0..horizon {
            let mut cost_sum = 0.0;
            let mut diff_sum = 0.0;
            for r in 0..runs {
                let alg = algorithm[r].stage_costs[t][agent];
                let diff = alg - benchmark[r].stage_costs[t];
                cost_sum += alg;
                diff_sum += diff;
                per_run_cum[r] += diff;
            }
            let mean_cost = cost_sum / runs as f64;
            let mean_diff = diff_sum / runs as f64;
            cum_cost += mean_cost;
            cum_regret += mean_diff;

            let stderr = if runs > 1 {
                let mean_cum = per_run_cum.iter().sum::<f64>() / runs as f64;
                let var = per_run_cum
                    .iter()
                    .map(|c| (c - mean_cum) * (c - mean_cum))
                    .sum::<f64>()
                    / (runs - 1) as f64;
                (var / runs as f64).sqrt()
            } else {
                0.0
            };

            let one_based = (t + 1) as f64;
            stage_cost_mean.push(mean_cost);
            cum_cost_mean.push(cum_cost);
            cum_regret_mean.push(cum_regret);
            cum_regret_stderr.push(stderr);
            regret_per_sqrt_t.push(cum_regret / one_based.sqrt());
            avg_regret.push(cum_regret / one_based);
        }

        traces.push(RegretTrace {
            agent_id: agent,
            stage_cost_mean,
            cum_cost_mean,
            cum_regret_mean,
            cum_regret_stderr,
            regret_per_sqrt_t,
            avg_regret,
        });
    }
    Ok(traces)
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub traces: Vec<RegretTrace>,
    /// Diagnostics of run 0, the one the harness serializes.
    pub run0_records: Vec<Vec<RoundRecord>>,
}

/// All runs plus paired benchmark runs, reduced to regret traces. Runs are
/// independent, so the map parallelizes when the mode allows.
pub fn run_monte_carlo(exp: &Experiment, mode: Mode) -> Result<MonteCarloOutput> {
    exp.validate()?;
    let alg_runs: Vec<AlgorithmRun> =
        map_indexed(exp.runs, mode, |r| run_algorithm(exp, r as u64, mode))
            .into_iter()
            .collect::<Result<_>>()?;
    let bench_runs: Vec<BenchmarkRun> =
        map_indexed(exp.runs, mode, |r| run_benchmark(exp, r as u64))
            .into_iter()
            .collect::<Result<_>>()?;
    let traces = build_traces(&alg_runs, &bench_runs)?;
    let run0_records = alg_runs.into_iter().next().map(|r| r.records).unwrap();
    Ok(MonteCarloOutput {
        traces,
        run0_records,
    })
}
