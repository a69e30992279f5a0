//! The distributed online gradient descent round and the hyper-parameter
//! derivations that size it.
//!
//! Each round every agent mixes its neighbors' covariance iterates through
//! the communication matrix, takes a gradient step against its just-revealed
//! cost pair, and projects back onto the feasible set. The step size and
//! horizon floor come from closed-form expressions in the network size, cost
//! budget, contraction factor, and trace bound.

use crate::exec::{map_indexed, Mode};
use crate::matlin::{sym_eig, MatlinError, SymMatrix};
use crate::network::MixingMatrix;
use crate::sdp::{
    dykstra_project, is_feasible, FeasibleSetSpec, JointCovariance, ProjectionReport, SdpError,
    DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DogdError {
    #[error("hyper-parameters out of range: {context}")]
    BadHyperParams { context: String },
    #[error("{which} cost matrix is not positive definite: min eigenvalue {min_eig:.3e}")]
    CostNotPd { which: &'static str, min_eig: f64 },
    #[error("{which} cost matrix trace {trace} exceeds the budget C = {c}")]
    CostTraceBound { which: &'static str, trace: f64, c: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("agent {agent}: {source}")]
    Projection { agent: usize, source: Box<SdpError> },
    #[error("initialization failed: {context}")]
    Initialization { context: String },
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Matlin(#[from] MatlinError),
}

pub type Result<T> = std::result::Result<T, DogdError>;

/// What to do when Dykstra exhausts its sweep budget mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonConvergencePolicy {
    /// Accept the iterate with a logged warning when its constraint
    /// violations are within 100x the tolerance; abort otherwise.
    Warn,
    Abort,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DykstraSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_policy")]
    pub on_nonconvergence: NonConvergencePolicy,
}

fn default_tol() -> f64 {
    DYKSTRA_TOL
}

fn default_max_sweeps() -> usize {
    DYKSTRA_MAX_SWEEPS
}

fn default_policy() -> NonConvergencePolicy {
    NonConvergencePolicy::Warn
}

impl Default for DykstraSettings {
    fn default() -> Self {
        Self {
            tol: DYKSTRA_TOL,
            max_sweeps: DYKSTRA_MAX_SWEEPS,
            on_nonconvergence: NonConvergencePolicy::Warn,
        }
    }
}

/// Problem constants and the step-size machinery derived from them, frozen at
/// construction so a run cannot silently mix inconsistent values.
#[derive(Debug, Clone, Serialize)]
pub struct HyperParams {
    kappa: f64,
    gamma: f64,
    c: f64,
    sigma2: f64,
    lambda2: f64,
    m: usize,
    beta: f64,
    nu: f64,
    rho: f64,
    t_min_network: f64,
    t_min_agent: f64,
    t: Option<usize>,
    eta: Option<f64>,
}

impl HyperParams {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Trace bound `nu = 2 kappa^4 lambda^2 / gamma`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Horizon floor with the sqrt(2) constant.
    pub fn t_min_network(&self) -> f64 {
        self.t_min_network
    }

    /// Horizon floor with the sqrt(2m) constant; the form used to size runs,
    /// since it is the one that makes the per-round iterate variation small
    /// enough for policy extraction guarantees.
    pub fn t_min_agent(&self) -> f64 {
        self.t_min_agent
    }

    pub fn t(&self) -> Option<usize> {
        self.t
    }

    /// Step size `1 / sqrt(rho T)`; present only when `T` was supplied.
    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    /// Bound on per-round iterate movement,
    /// `4 sqrt(2m) C eta / (1 - beta)`.
    pub fn iterate_variation_bound(&self) -> Option<f64> {
        self.eta
            .map(|eta| 4.0 * (2.0 * self.m as f64).sqrt() * self.c * eta / (1.0 - self.beta))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn derive_hyperparams(
    kappa: f64,
    gamma: f64,
    c: f64,
    sigma2: f64,
    lambda2: f64,
    m: usize,
    beta: f64,
    t: Option<usize>,
) -> Result<HyperParams> {
    let mut problems = Vec::new();
    if !(kappa > 1.0) {
        problems.push(format!("kappa = {kappa}, need kappa > 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        problems.push(format!(
            "gamma = {gamma}, need 0 < gamma < 1 (the trace bound divides by gamma)"
        ));
    }
    if !(c > 0.0) {
        problems.push(format!("C = {c}, need C > 0"));
    }
    if !(sigma2 > 0.0) {
        problems.push(format!("sigma2 = {sigma2}, need sigma2 > 0"));
    }
    if !(lambda2 > 0.0) {
        problems.push(format!("lambda2 = {lambda2}, need lambda2 > 0"));
    }
    if m == 0 {
        problems.push("m = 0, need at least one agent".into());
    }
    if !(0.0..1.0).contains(&beta) {
        problems.push(format!("beta = {beta}, need 0 <= beta < 1"));
    }
    if let Some(t) = t {
        if t == 0 {
            problems.push("T = 0, need T >= 1".into());
        }
    }
    if !problems.is_empty() {
        return Err(DogdError::BadHyperParams {
            context: problems.join("; "),
        });
    }

    let mf = m as f64;
    let nu = 2.0 * kappa.powi(4) * lambda2 / gamma;
    let gap = 1.0 - beta;
    let rho = 4.0 * mf * c * c * (3.0 + 4.0 * mf.sqrt() / gap)
        + mf * c * (1.0 + nu / sigma2) * 16.0 * (2.0 * mf).sqrt() * c * nu / (gap * sigma2);
    let sigma4 = sigma2 * sigma2;
    let t_floor = |front: f64| {
        let root = 4.0 * front * nu * c / (sigma4 * gap * rho.sqrt());
        root * root
    };
    let t_min_network = t_floor(2f64.sqrt());
    let t_min_agent = t_floor((2.0 * mf).sqrt());
    let eta = t.map(|t| 1.0 / (rho * t as f64).sqrt());

    Ok(HyperParams {
        kappa,
        gamma,
        c,
        sigma2,
        lambda2,
        m,
        beta,
        nu,
        rho,
        t_min_network,
        t_min_agent,
        t,
        eta,
    })
}

/// One agent's revealed cost matrices for a round.
#[derive(Debug, Clone)]
pub struct CostPair {
    q: SymMatrix,
    r: SymMatrix,
}

impl CostPair {
    pub fn new(q: SymMatrix, r: SymMatrix, c: f64) -> Result<Self> {
        let q_min = sym_eig(&q)?.min();
        if q_min <= 0.0 {
            return Err(DogdError::CostNotPd {
                which: "state",
                min_eig: q_min,
            });
        }
        let r_min = sym_eig(&r)?.min();
        if r_min <= 0.0 {
            return Err(DogdError::CostNotPd {
                which: "control",
                min_eig: r_min,
            });
        }
        if q.trace() > c {
            return Err(DogdError::CostTraceBound {
                which: "state",
                trace: q.trace(),
                c,
            });
        }
        if r.trace() > c {
            return Err(DogdError::CostTraceBound {
                which: "control",
                trace: r.trace(),
                c,
            });
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }

    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    /// `blockdiag(Q, R)`: the gradient of the linear stage cost in the joint
    /// covariance.
    pub fn block_diag(&self) -> SymMatrix {
        SymMatrix::block_diag(&self.q, &self.r)
    }
}

/// `Sigma_mixed - eta * blockdiag(Q, R)`.
pub fn gradient_step(mixed: &SymMatrix, costs: &CostPair, eta: f64) -> SymMatrix {
    let l = costs.block_diag();
    assert_eq!(
        mixed.dim(),
        l.dim(),
        "gradient step dimension mismatch: iterate {} vs cost {}",
        mixed.dim(),
        l.dim()
    );
    mixed.sub(&l.scale(eta))
}

/// `sum_j P_ji Sigma_j` for agent `i`, touching only iterates with positive
/// weight (an agent never reads beyond its neighborhood).
pub fn consensus_mix(
    iterates: &[JointCovariance],
    p: &MixingMatrix,
    i: usize,
) -> Result<SymMatrix> {
    if iterates.len() != p.agents() {
        return Err(DogdError::DimensionMismatch {
            context: format!(
                "{} iterates for a {}-agent mixing matrix",
                iterates.len(),
                p.agents()
            ),
        });
    }
    if i >= p.agents() {
        return Err(DogdError::DimensionMismatch {
            context: format!("agent {i} out of range for m = {}", p.agents()),
        });
    }
    let n = iterates[0].dim();
    let mut acc = DMatrix::zeros(n, n);
    for (j, sigma) in iterates.iter().enumerate() {
        let weight = p.entry(j, i);
        if weight <= 0.0 {
            continue;
        }
        if sigma.dim() != n {
            return Err(DogdError::DimensionMismatch {
                context: format!("iterate {j} has dim {} but agent 0 has {n}", sigma.dim()),
            });
        }
        acc += sigma.matrix().matrix() * weight;
    }
    Ok(SymMatrix::symmetrize(acc))
}

fn accept_or_reject(
    agent: usize,
    err: SdpError,
    settings: &DykstraSettings,
    nu: f64,
) -> Result<(JointCovariance, ProjectionReport)> {
    match err {
        SdpError::NonConvergence { report, iterate }
            if settings.on_nonconvergence == NonConvergencePolicy::Warn =>
        {
            let slack = 100.0 * settings.tol;
            let tolerable = report.affine_residual <= slack
                && report.min_eigenvalue >= -slack
                && report.trace <= nu + slack;
            if tolerable {
                log::warn!(
                    "agent {agent}: projection unconverged after {} sweeps \
                     (change {:.3e}), accepting iterate within 100x tolerance",
                    report.iterations,
                    report.final_change
                );
                Ok((*iterate, report))
            } else {
                Err(DogdError::Projection {
                    agent,
                    source: Box::new(SdpError::NonConvergence { report, iterate }),
                })
            }
        }
        other => Err(DogdError::Projection {
            agent,
            source: Box::new(other),
        }),
    }
}

/// One synchronous round: every agent mixes the round-t iterates, steps
/// against its own cost, and projects. Agents are independent within the
/// round, so the map runs in parallel when the mode allows.
pub fn dogd_round(
    iterates: &[JointCovariance],
    costs: &[CostPair],
    p: &MixingMatrix,
    spec: &FeasibleSetSpec,
    eta: f64,
    settings: &DykstraSettings,
    mode: Mode,
) -> Result<(Vec<JointCovariance>, Vec<ProjectionReport>)> {
    if iterates.len() != costs.len() {
        return Err(DogdError::DimensionMismatch {
            context: format!("{} iterates but {} cost pairs", iterates.len(), costs.len()),
        });
    }
    let m = p.agents();
    let results = map_indexed(m, mode, |i| -> Result<(JointCovariance, ProjectionReport)> {
        let mixed = consensus_mix(iterates, p, i)?;
        let stepped = gradient_step(&mixed, &costs[i], eta);
        match dykstra_project(spec, &stepped, settings.tol, settings.max_sweeps) {
            Ok(pair) => Ok(pair),
            Err(err) => accept_or_reject(i, err, settings, spec.nu()),
        }
    });
    let mut next = Vec::with_capacity(m);
    let mut reports = Vec::with_capacity(m);
    for r in results {
        let (sigma, report) = r?;
        next.push(sigma);
        reports.push(report);
    }
    Ok((next, reports))
}

/// The shared feasible starting point: for stable `A`, the closed-form
/// `blockdiag(X, eps I)` with `X` solving the noise-augmented fixed-point
/// equation; otherwise a Dykstra projection of `blockdiag(W, eps I)`.
pub fn initial_iterate(
    spec: &FeasibleSetSpec,
    eps: f64,
    settings: &DykstraSettings,
) -> Result<JointCovariance> {
    let (d, k) = (spec.state_dim(), spec.input_dim());
    let eps_uu = SymMatrix::identity(k).scale(eps);

    if crate::matlin::spectral_radius(spec.a()) < 1.0 - 1e-12 {
        let w_aug = SymMatrix::symmetrize(
            spec.w().matrix() + eps * spec.b() * spec.b().transpose(),
        );
        let x = crate::matlin::solve_discrete_lyapunov(spec.a(), &w_aug)?;
        let sigma = JointCovariance::from_blocks(&x, &DMatrix::zeros(d, k), &eps_uu)?;
        let (ok, report) = is_feasible(spec, &sigma, 10.0 * settings.tol)?;
        if ok {
            return Ok(sigma);
        }
        log::warn!(
            "closed-form start infeasible (trace {:.6} vs nu {}), projecting instead",
            report.trace,
            spec.nu()
        );
    }

    let seed = SymMatrix::block_diag(&spec.w().clone(), &eps_uu);
    let projected = match dykstra_project(spec, &seed, settings.tol, settings.max_sweeps) {
        Ok((sigma, _)) => sigma,
        Err(SdpError::NonConvergence { report, iterate })
            if report.affine_residual <= 100.0 * settings.tol
                && report.min_eigenvalue >= -100.0 * settings.tol
                && report.trace <= spec.nu() + 100.0 * settings.tol =>
        {
            *iterate
        }
        Err(e) => {
            return Err(DogdError::Initialization {
                context: format!("projection of the fallback seed failed: {e}"),
            });
        }
    };
    let (ok, report) = is_feasible(spec, &projected, 100.0 * settings.tol)?;
    if !ok {
        return Err(DogdError::Initialization {
            context: format!(
                "no feasible starting point: residual {:.3e}, min eig {:.3e}, trace {:.6}",
                report.affine_residual, report.min_eigenvalue, report.trace
            ),
        });
    }
    Ok(projected)
}
