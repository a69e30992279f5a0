//! Linear-Gaussian policies extracted from joint covariances, plus strong
//! stability certification used by the test suites.
//!
//! A feasible covariance yields the controller `K = Sigma_ux Sigma_xx^{-1}`
//! and action noise `V = Sigma_uu - K Sigma_xx K^T`; the Schur complement
//! structure makes `V` PSD whenever the joint matrix is. Stability checks
//! build a similarity witness from the eigenbasis of `A + BK`; that witness
//! is sufficient but not necessary, so a defective closed loop yields an
//! indeterminate verdict rather than an invalid one.

use crate::matlin::{
    psd_project, real_eig_basis, spectral_norm, sym_eig, MatlinError, SymMatrix,
};
use crate::sdp::JointCovariance;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("state covariance block is not invertible: min eigenvalue {min_eig:.3e}")]
    SingularStateBlock { min_eig: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("stability parameters out of range: kappa = {kappa}, gamma = {gamma}")]
    BadStabilityParams { kappa: f64, gamma: f64 },
    #[error(transparent)]
    Matlin(#[from] MatlinError),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// `u ~ N(K x, V)`. The stored factor `F` satisfies `F F^T = V` (eigenvalue
/// square root of the fixed-up `V`), so sampling is `K x + F z`.
#[derive(Debug, Clone)]
pub struct LinearPolicy {
    k: DMatrix<f64>,
    v: SymMatrix,
    v_factor: DMatrix<f64>,
    v_min_eig_raw: f64,
}

impl LinearPolicy {
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn v(&self) -> &SymMatrix {
        &self.v
    }

    pub fn gain_norm(&self) -> f64 {
        spectral_norm(&self.k)
    }

    /// Smallest eigenvalue of `V` before the PSD fix-up; a diagnostic for how
    /// far the iterate strayed from the cone.
    pub fn v_min_eig_raw(&self) -> f64 {
        self.v_min_eig_raw
    }

    pub fn sample_action<R: Rng>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let k_dim = self.k.nrows();
        let z = DVector::from_iterator(
            k_dim,
            (0..k_dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        &self.k * x + &self.v_factor * z
    }
}

/// Clip negative eigenvalues to zero, then add `eps * I`.
pub fn psd_fixup(v: &SymMatrix, eps: f64) -> Result<SymMatrix> {
    assert!(eps >= 0.0, "fix-up shift must be nonnegative");
    let clipped = psd_project(v)?;
    if eps == 0.0 {
        return Ok(clipped);
    }
    let n = clipped.dim();
    Ok(SymMatrix::symmetrize(
        clipped.matrix() + DMatrix::from_diagonal_element(n, n, eps),
    ))
}

/// Controller and action noise read off a covariance iterate.
///
/// `Sigma_xx` is inverted through its eigendecomposition; an eigenvalue at or
/// below zero aborts, one below `warn_floor` (pass the noise floor, e.g.
/// `sigma^2 / 2`) only logs, since it signals projection-tolerance leakage
/// rather than a broken iterate.
pub fn extract_policy(
    sigma: &JointCovariance,
    eps_psd: f64,
    warn_floor: f64,
) -> Result<LinearPolicy> {
    let xx = sigma.sigma_xx();
    let eig = sym_eig(&xx)?;
    let min_eig = eig.min();
    if min_eig <= 0.0 {
        return Err(PolicyError::SingularStateBlock { min_eig });
    }
    if min_eig < warn_floor {
        log::warn!(
            "state covariance block min eigenvalue {min_eig:.3e} under the floor {warn_floor:.3e}"
        );
    }
    let xx_inv = eig.map_reconstruct(|l| 1.0 / l);
    let k = sigma.sigma_ux() * xx_inv.matrix();
    let v_raw = SymMatrix::symmetrize(
        sigma.sigma_uu().matrix() - &k * xx.matrix() * k.transpose(),
    );
    let v_min_eig_raw = sym_eig(&v_raw)?.min();
    let v = psd_fixup(&v_raw, eps_psd)?;
    let v_eig = sym_eig(&v)?;
    let v_factor = &v_eig.vectors
        * DMatrix::from_diagonal(&v_eig.values.map(|l| l.max(0.0).sqrt()));
    Ok(LinearPolicy {
        k,
        v,
        v_factor,
        v_min_eig_raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    Valid,
    Invalid,
    /// The eigenbasis witness could not be built (defective closed loop);
    /// some other similarity might still certify the gain.
    Indeterminate,
}

/// Outcome of the similarity check `A + BK = H L H^{-1}` against the bounds
/// `‖K‖ <= kappa`, `‖L‖ <= 1 - gamma`, `‖H‖ ‖H^{-1}‖ <= kappa`.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub kappa: f64,
    pub gamma: f64,
    pub verdict: StabilityVerdict,
    pub gain_norm: f64,
    pub gain_ok: bool,
    pub l_norm: Option<f64>,
    pub contraction_ok: Option<bool>,
    pub h_cond: Option<f64>,
    pub conditioning_ok: Option<bool>,
    pub reconstruction_err: Option<f64>,
    pub h: Option<DMatrix<f64>>,
    pub l: Option<DMatrix<f64>>,
}

fn check_stability_params(kappa: f64, gamma: f64) -> Result<()> {
    if !(kappa >= 1.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(PolicyError::BadStabilityParams { kappa, gamma });
    }
    Ok(())
}

pub fn check_strong_stability(
    k: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    kappa: f64,
    gamma: f64,
) -> Result<StabilityCertificate> {
    check_stability_params(kappa, gamma)?;
    let d = a.nrows();
    if a.ncols() != d || b.nrows() != d || k.nrows() != b.ncols() || k.ncols() != d {
        return Err(PolicyError::DimensionMismatch {
            context: format!(
                "A {}x{}, B {}x{}, K {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                k.nrows(),
                k.ncols()
            ),
        });
    }
    let m = a + b * k;
    let gain_norm = spectral_norm(k);
    let gain_ok = gain_norm <= kappa;

    let h = match real_eig_basis(&m) {
        Ok(h) => h,
        Err(MatlinError::Defective { .. }) => {
            return Ok(StabilityCertificate {
                kappa,
                gamma,
                verdict: StabilityVerdict::Indeterminate,
                gain_norm,
                gain_ok,
                l_norm: None,
                contraction_ok: None,
                h_cond: None,
                conditioning_ok: None,
                reconstruction_err: None,
                h: None,
                l: None,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let h_inv = h.clone().try_inverse().ok_or(MatlinError::Defective {
        dim: d,
        found: 0,
    })?;
    let l = &h_inv * &m * &h;
    let l_norm = spectral_norm(&l);
    let h_cond = spectral_norm(&h) * spectral_norm(&h_inv);
    let reconstruction_err = (&h * &l * &h_inv - &m).norm();
    let contraction_ok = l_norm <= 1.0 - gamma;
    let conditioning_ok = h_cond <= kappa;
    let verdict = if gain_ok && contraction_ok && conditioning_ok {
        StabilityVerdict::Valid
    } else {
        StabilityVerdict::Invalid
    };
    Ok(StabilityCertificate {
        kappa,
        gamma,
        verdict,
        gain_norm,
        gain_ok,
        l_norm: Some(l_norm),
        contraction_ok: Some(contraction_ok),
        h_cond: Some(h_cond),
        conditioning_ok: Some(conditioning_ok),
        reconstruction_err: Some(reconstruction_err),
        h: Some(h),
        l: Some(l),
    })
}

/// Per-round outcome inside a sequential check.
#[derive(Debug, Clone)]
pub struct RoundStability {
    pub gain_norm: f64,
    pub gain_ok: bool,
    pub l_norm: Option<f64>,
    pub contraction_ok: Option<bool>,
    pub h_norm: Option<f64>,
    pub h_inv_norm: Option<f64>,
}

/// Sequential strong stability: each round's gain and contraction bounds,
/// uniform conditioning `beta' / alpha <= kappa` across rounds, and the
/// slow-drift bound `‖H_{t+1}^{-1} H_t‖ <= 1 + gamma / 2` between rounds.
#[derive(Debug, Clone)]
pub struct SequentialStabilityReport {
    pub kappa: f64,
    pub gamma: f64,
    pub rounds: Vec<RoundStability>,
    /// `‖H_{t+1}^{-1} H_t‖` per consecutive pair; `None` when either basis was
    /// unavailable.
    pub transition_norms: Vec<Option<f64>>,
    /// Largest `‖H_t‖` over rounds with a basis.
    pub beta_prime: f64,
    /// Largest `‖H_t^{-1}‖` over rounds with a basis.
    pub inv_alpha: f64,
    pub conditioning_ok: bool,
    pub transitions_ok: bool,
    pub indeterminate_rounds: Vec<usize>,
    pub valid: bool,
}

/// Reorder (and sign-align) the columns of `h` against `prev` by greedy
/// largest inner product. Column permutations and sign flips are orthogonal,
/// so every norm checked downstream is unchanged; this only keeps the
/// reported basis sequence continuous.
fn align_columns(prev: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let d = h.ncols();
    let mut score: Vec<(usize, usize, f64)> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let dot = h.column(i).dot(&prev.column(j));
            score.push((i, j, dot));
        }
    }
    score.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
    let mut taken_src = vec![false; d];
    let mut taken_dst = vec![false; d];
    let mut out = DMatrix::zeros(h.nrows(), d);
    for (i, j, dot) in score {
        if taken_src[i] || taken_dst[j] {
            continue;
        }
        taken_src[i] = true;
        taken_dst[j] = true;
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        out.set_column(j, &(h.column(i) * sign));
    }
    out
}

pub fn check_sequential_strong_stability(
    ks: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    kappa: f64,
    gamma: f64,
) -> Result<SequentialStabilityReport> {
    check_stability_params(kappa, gamma)?;
    let mut rounds = Vec::with_capacity(ks.len());
    let mut bases: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> = Vec::with_capacity(ks.len());
    let mut indeterminate_rounds = Vec::new();

    for (t, k) in ks.iter().enumerate() {
        let cert = check_strong_stability(k, a, b, kappa, gamma)?;
        match cert.verdict {
            StabilityVerdict::Indeterminate => {
                indeterminate_rounds.push(t);
                bases.push(None);
                rounds.push(RoundStability {
                    gain_norm: cert.gain_norm,
                    gain_ok: cert.gain_ok,
                    l_norm: None,
                    contraction_ok: None,
                    h_norm: None,
                    h_inv_norm: None,
                });
            }
            _ => {
                let mut h = cert.h.expect("determinate certificate carries H");
                if let Some(Some((prev, _))) = bases.last() {
                    h = align_columns(prev, &h);
                }
                let h_inv = h.clone().try_inverse().ok_or(MatlinError::Defective {
                    dim: h.nrows(),
                    found: 0,
                })?;
                rounds.push(RoundStability {
                    gain_norm: cert.gain_norm,
                    gain_ok: cert.gain_ok,
                    l_norm: cert.l_norm,
                    contraction_ok: cert.contraction_ok,
                    h_norm: Some(spectral_norm(&h)),
                    h_inv_norm: Some(spectral_norm(&h_inv)),
                });
                bases.push(Some((h, h_inv)));
            }
        }
    }

    let mut transition_norms = Vec::new();
    for pair in bases.windows(2) {
        transition_norms.push(match (&pair[0], &pair[1]) {
            (Some((h_prev, _)), Some((_, h_inv_next))) => {
                Some(spectral_norm(&(h_inv_next * h_prev)))
            }
            _ => None,
        });
    }

    let beta_prime = rounds
        .iter()
        .filter_map(|r| r.h_norm)
        .fold(0.0f64, f64::max);
    let inv_alpha = rounds
        .iter()
        .filter_map(|r| r.h_inv_norm)
        .fold(0.0f64, f64::max);
    let conditioning_ok = beta_prime * inv_alpha <= kappa;
    let transitions_ok = transition_norms
        .iter()
        .all(|n| n.map(|v| v <= 1.0 + gamma / 2.0).unwrap_or(false));
    let valid = indeterminate_rounds.is_empty()
        && rounds
            .iter()
            .all(|r| r.gain_ok && r.contraction_ok.unwrap_or(false))
        && conditioning_ok
        && (transition_norms.is_empty() || transitions_ok);

    Ok(SequentialStabilityReport {
        kappa,
        gamma,
        rounds,
        transition_norms,
        beta_prime,
        inv_alpha,
        conditioning_ok,
        transitions_ok,
        indeterminate_rounds,
        valid,
    })
}
