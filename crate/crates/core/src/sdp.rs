//! The feasible set of steady-state joint covariances and Dykstra's
//! alternating projection onto it.
//!
//! The set is the intersection of three convex sets in symmetric-matrix
//! space: the affine subspace `Sigma_xx = (A B) Sigma (A B)^T + W`, the PSD
//! cone, and the trace halfspace `Tr(Sigma) <= nu`. Dykstra's algorithm
//! cycles projections onto the three, keeping correction vectors for the two
//! non-affine sets, and converges to the Frobenius-nearest point of the
//! intersection.

use crate::matlin::{
    self, psd_project, smat, svec, sym_eig, MatlinError, SymMatrix,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("noise covariance min eigenvalue {min_eig:.3e} is below the floor sigma^2 = {sigma2:.3e}")]
    NoiseFloor { min_eig: f64, sigma2: f64 },
    #[error("trace bound nu = {nu} does not exceed Tr(W) = {trace_w}; the feasible set is empty")]
    TraceBudget { nu: f64, trace_w: f64 },
    #[error("affine constraint operator: {source}")]
    ConstraintOperator { source: MatlinError },
    #[error(transparent)]
    Matlin(#[from] MatlinError),
    #[error("projection stopped after {} sweeps: change {:.3e}, affine residual {:.3e}, min eigenvalue {:.3e}, trace {:.6}",
            report.iterations, report.final_change, report.affine_residual, report.min_eigenvalue, report.trace)]
    NonConvergence {
        report: ProjectionReport,
        iterate: Box<JointCovariance>,
    },
}

pub type Result<T> = std::result::Result<T, SdpError>;

/// Joint covariance of state and control, partitioned as
/// `[[Sigma_xx, Sigma_xu], [Sigma_ux, Sigma_uu]]` with `Sigma_ux` derived by
/// transposition rather than stored.
#[derive(Debug, Clone)]
pub struct JointCovariance {
    d: usize,
    k: usize,
    mat: SymMatrix,
}

impl JointCovariance {
    pub fn new(d: usize, k: usize, mat: SymMatrix) -> Result<Self> {
        if mat.dim() != d + k {
            return Err(SdpError::DimensionMismatch {
                context: format!(
                    "joint covariance is {}x{} but d + k = {}",
                    mat.dim(),
                    mat.dim(),
                    d + k
                ),
            });
        }
        Ok(Self { d, k, mat })
    }

    pub fn from_blocks(xx: &SymMatrix, xu: &DMatrix<f64>, uu: &SymMatrix) -> Result<Self> {
        let (d, k) = (xx.dim(), uu.dim());
        if xu.nrows() != d || xu.ncols() != k {
            return Err(SdpError::DimensionMismatch {
                context: format!(
                    "cross block is {}x{} but blocks demand {}x{}",
                    xu.nrows(),
                    xu.ncols(),
                    d,
                    k
                ),
            });
        }
        let mut out = DMatrix::zeros(d + k, d + k);
        out.view_mut((0, 0), (d, d)).copy_from(xx.matrix());
        out.view_mut((0, d), (d, k)).copy_from(xu);
        out.view_mut((d, 0), (k, d)).copy_from(&xu.transpose());
        out.view_mut((d, d), (k, k)).copy_from(uu.matrix());
        Ok(Self {
            d,
            k,
            mat: SymMatrix::symmetrize(out),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d + self.k
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn into_inner(self) -> SymMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn sigma_xx(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.mat.matrix().view((0, 0), (self.d, self.d)).into())
    }

    pub fn sigma_xu(&self) -> DMatrix<f64> {
        self.mat.matrix().view((0, self.d), (self.d, self.k)).into()
    }

    pub fn sigma_ux(&self) -> DMatrix<f64> {
        self.sigma_xu().transpose()
    }

    pub fn sigma_uu(&self) -> SymMatrix {
        SymMatrix::symmetrize(
            self.mat
                .matrix()
                .view((self.d, self.d), (self.k, self.k))
                .into(),
        )
    }
}

/// Convergence diagnostics of a projection: sweep count, last sweep-to-sweep
/// Frobenius change, and the three constraint residuals at exit.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionReport {
    pub iterations: usize,
    pub final_change: f64,
    pub affine_residual: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
}

/// Residual multiple: both the sweep exit test and `dykstra_project`'s
/// feasibility guarantee allow constraint violations up to `10 * tol`.
pub const RESIDUAL_FACTOR: f64 = 10.0;

/// Default Dykstra tolerance on the sweep-to-sweep Frobenius change.
pub const DYKSTRA_TOL: f64 = 1e-8;

/// Default Dykstra sweep budget.
pub const DYKSTRA_MAX_SWEEPS: usize = 5000;

/// The projection target: dynamics `(A, B)`, noise covariance `W` with floor
/// `sigma^2`, and trace budget `nu`. Construction precomputes the affine
/// constraint operator `E` (acting on svec coordinates) and its
/// pseudoinverse, so per-sweep affine projections are two matrix-vector
/// products.
#[derive(Debug, Clone)]
pub struct FeasibleSetSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    w: SymMatrix,
    nu: f64,
    sigma2: f64,
    d: usize,
    k: usize,
    e: DMatrix<f64>,
    e_pinv: DMatrix<f64>,
    b_vec: DVector<f64>,
}

impl FeasibleSetSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        w: SymMatrix,
        nu: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let d = w.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(SdpError::DimensionMismatch {
                context: format!("A is {}x{} but W is {d}x{d}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != d || b.ncols() == 0 {
            return Err(SdpError::DimensionMismatch {
                context: format!("B is {}x{} but must be {d}xk, k >= 1", b.nrows(), b.ncols()),
            });
        }
        let k = b.ncols();
        if !(sigma2 > 0.0) {
            return Err(SdpError::NoiseFloor {
                min_eig: f64::NAN,
                sigma2,
            });
        }
        let min_eig = sym_eig(&w)?.min();
        if min_eig + 1e-12 * sigma2.max(1.0) < sigma2 {
            return Err(SdpError::NoiseFloor { min_eig, sigma2 });
        }
        if nu <= w.trace() {
            return Err(SdpError::TraceBudget {
                nu,
                trace_w: w.trace(),
            });
        }

        // E column by column: the constraint map Sigma -> Sigma_xx - (A B) Sigma (A B)^T
        // is linear, so its matrix in svec coordinates comes from pushing each
        // svec basis element through it.
        let n = d + k;
        let rows = d * (d + 1) / 2;
        let cols = n * (n + 1) / 2;
        let mut g = DMatrix::zeros(d, n);
        g.view_mut((0, 0), (d, d)).copy_from(&a);
        g.view_mut((0, d), (d, k)).copy_from(&b);
        let mut e = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            let mut unit = DVector::zeros(cols);
            unit[j] = 1.0;
            let basis = smat(&unit)?;
            let mapped = basis.matrix().view((0, 0), (d, d)) - &g * basis.matrix() * g.transpose();
            e.set_column(j, &svec(&SymMatrix::symmetrize(mapped.into())));
        }
        let e_pinv = matlin::pinv_full_row_rank(&e)
            .map_err(|source| SdpError::ConstraintOperator { source })?;
        let b_vec = svec(&w);

        Ok(Self {
            a,
            b,
            w,
            nu,
            sigma2,
            d,
            k,
            e,
            e_pinv,
            b_vec,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn w(&self) -> &SymMatrix {
        &self.w
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.k
    }

    #[cfg(test)]
    pub(crate) fn constraint_operator(&self) -> &DMatrix<f64> {
        &self.e
    }

    #[cfg(test)]
    pub(crate) fn constraint_rhs(&self) -> &DVector<f64> {
        &self.b_vec
    }
}

/// `Tr(L^T Sigma)`: the stage-cost functional is linear in the joint
/// covariance.
pub fn cost_inner(l: &SymMatrix, sigma: &JointCovariance) -> Result<f64> {
    if l.dim() != sigma.dim() {
        return Err(SdpError::DimensionMismatch {
            context: format!("cost matrix is {0}x{0} but covariance is {1}x{1}", l.dim(), sigma.dim()),
        });
    }
    Ok(l.matrix().dot(sigma.matrix().matrix()))
}

/// `Sigma_xx - (A B) Sigma (A B)^T - W`; the zero matrix exactly when the
/// steady-state constraint holds.
pub fn affine_residual(spec: &FeasibleSetSpec, sigma: &JointCovariance) -> Result<SymMatrix> {
    if sigma.state_dim() != spec.d || sigma.input_dim() != spec.k {
        return Err(SdpError::DimensionMismatch {
            context: format!(
                "covariance blocks are ({}, {}) but the set demands ({}, {})",
                sigma.state_dim(),
                sigma.input_dim(),
                spec.d,
                spec.k
            ),
        });
    }
    let mut g = DMatrix::zeros(spec.d, spec.d + spec.k);
    g.view_mut((0, 0), (spec.d, spec.d)).copy_from(&spec.a);
    g.view_mut((0, spec.d), (spec.d, spec.k)).copy_from(&spec.b);
    let pushed = &g * sigma.matrix().matrix() * g.transpose();
    let res = sigma.sigma_xx().matrix() - pushed - spec.w.matrix();
    Ok(SymMatrix::symmetrize(res))
}

/// Orthogonal (Frobenius) projection onto the affine subspace
/// `E svec(Sigma) = svec(W)`, via the cached pseudoinverse.
pub fn project_affine(spec: &FeasibleSetSpec, sigma: &JointCovariance) -> Result<JointCovariance> {
    let s = svec(sigma.matrix());
    if s.len() != spec.e.ncols() {
        return Err(SdpError::DimensionMismatch {
            context: format!(
                "svec length {} but constraint operator has {} columns",
                s.len(),
                spec.e.ncols()
            ),
        });
    }
    let violation = &spec.e * &s - &spec.b_vec;
    let projected = s - &spec.e_pinv * violation;
    JointCovariance::new(spec.d, spec.k, smat(&projected)?)
}

/// Projection onto the halfspace `Tr <= nu`: shift the diagonal down
/// uniformly when the trace overshoots, otherwise identity.
pub fn project_trace(sigma: &JointCovariance, nu: f64) -> JointCovariance {
    let tr = sigma.trace();
    if tr <= nu {
        return sigma.clone();
    }
    let n = sigma.dim();
    let shift = (tr - nu) / n as f64;
    let shifted = sigma.matrix().matrix() - DMatrix::from_diagonal_element(n, n, shift);
    JointCovariance {
        d: sigma.d,
        k: sigma.k,
        mat: SymMatrix::symmetrize(shifted),
    }
}

fn report_for(
    spec: &FeasibleSetSpec,
    sigma: &JointCovariance,
    iterations: usize,
    final_change: f64,
) -> Result<ProjectionReport> {
    Ok(ProjectionReport {
        iterations,
        final_change,
        affine_residual: affine_residual(spec, sigma)?.norm_f(),
        min_eigenvalue: sym_eig(sigma.matrix())?.min(),
        trace: sigma.trace(),
    })
}

/// Dykstra's alternating projection onto the feasible set.
///
/// Sweep order is affine subspace, PSD cone, trace halfspace; the affine set
/// needs no correction vector, the other two keep the standard ones. A sweep
/// ends the loop when its Frobenius change is at most `tol` and every
/// constraint residual is within `RESIDUAL_FACTOR * tol`. Exhausting
/// `max_sweeps` is an error carrying the last iterate and its diagnostics.
pub fn dykstra_project(
    spec: &FeasibleSetSpec,
    sigma0: &SymMatrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<(JointCovariance, ProjectionReport)> {
    assert!(tol > 0.0, "projection tolerance must be positive");
    let mut current = JointCovariance::new(spec.d, spec.k, sigma0.clone())?;
    let n = current.dim();
    let mut corr_psd = DMatrix::<f64>::zeros(n, n);
    let mut corr_trace = DMatrix::<f64>::zeros(n, n);
    let mut last_report = ProjectionReport {
        iterations: 0,
        final_change: f64::INFINITY,
        affine_residual: f64::INFINITY,
        min_eigenvalue: f64::NEG_INFINITY,
        trace: f64::INFINITY,
    };

    for sweep in 1..=max_sweeps {
        let prev = current.matrix().matrix().clone();

        let after_affine = project_affine(spec, &current)?;

        let shifted = SymMatrix::symmetrize(after_affine.matrix().matrix() + &corr_psd);
        let after_psd = psd_project(&shifted)?;
        corr_psd = shifted.matrix() - after_psd.matrix();
        let after_psd = JointCovariance::new(spec.d, spec.k, after_psd)?;

        let shifted = SymMatrix::symmetrize(after_psd.matrix().matrix() + &corr_trace);
        let shifted = JointCovariance::new(spec.d, spec.k, shifted)?;
        let after_trace = project_trace(&shifted, spec.nu);
        corr_trace = shifted.matrix().matrix() - after_trace.matrix().matrix();
        current = after_trace;

        let change = (current.matrix().matrix() - &prev).norm();
        let report = report_for(spec, &current, sweep, change)?;
        last_report = report;
        let slack = RESIDUAL_FACTOR * tol;
        if change <= tol
            && report.affine_residual <= slack
            && report.min_eigenvalue >= -slack
            && report.trace <= spec.nu + slack
        {
            return Ok((current, report));
        }
    }

    Err(SdpError::NonConvergence {
        report: last_report,
        iterate: Box::new(current),
    })
}

/// Checks the three constraints within an absolute `tol`, returning the
/// diagnostics either way.
pub fn is_feasible(
    spec: &FeasibleSetSpec,
    sigma: &JointCovariance,
    tol: f64,
) -> Result<(bool, ProjectionReport)> {
    let report = report_for(spec, sigma, 0, 0.0)?;
    let ok = report.affine_residual <= tol
        && report.min_eigenvalue >= -tol
        && report.trace <= spec.nu + tol;
    Ok((ok, report))
}
