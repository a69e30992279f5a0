//! Linear system simulation: identical plants stepped under Gaussian process
//! noise drawn from per-agent seeded streams.

use crate::matlin::SymMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("noise covariance is not positive definite")]
    NoiseNotPd,
    #[error("empty sample set")]
    EmptySamples,
}

pub type Result<T> = std::result::Result<T, PlantError>;

/// The plant `x' = A x + B u + w`, with `w ~ N(0, W)` drawn through the
/// precomputed Cholesky factor of `W`.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    w: SymMatrix,
    noise_chol: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, w: SymMatrix) -> Result<Self> {
        let d = w.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(PlantError::DimensionMismatch {
                context: format!("A is {}x{} but W is {d}x{d}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != d || b.ncols() == 0 {
            return Err(PlantError::DimensionMismatch {
                context: format!("B is {}x{}, need {d} rows and k >= 1 columns", b.nrows(), b.ncols()),
            });
        }
        let noise_chol = nalgebra::Cholesky::new(w.matrix().clone())
            .ok_or(PlantError::NoiseNotPd)?
            .l();
        Ok(Self { a, b, w, noise_chol })
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

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// One deterministic step `A x + B u + w` with the noise made explicit.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let (d, k) = (self.state_dim(), self.input_dim());
        if x.len() != d || u.len() != k || w.len() != d {
            return Err(PlantError::DimensionMismatch {
                context: format!(
                    "step got |x| = {}, |u| = {}, |w| = {}, plant is d = {d}, k = {k}",
                    x.len(),
                    u.len(),
                    w.len()
                ),
            });
        }
        Ok(&self.a * x + &self.b * u + w)
    }

    /// One draw of `N(0, W)` via the cached factor; deterministic given the
    /// stream state.
    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.state_dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.noise_chol * z
    }
}

/// One agent's trajectory position.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub agent_id: usize,
    pub x: DVector<f64>,
    pub t: usize,
}

/// Uncentered sample second-moment matrix `(1/N) sum x x^T` over same-round
/// states gathered across Monte Carlo runs.
pub fn empirical_state_covariance(samples: &[DVector<f64>]) -> Result<SymMatrix> {
    let first = samples.first().ok_or(PlantError::EmptySamples)?;
    let d = first.len();
    let mut acc = DMatrix::zeros(d, d);
    for x in samples {
        if x.len() != d {
            return Err(PlantError::DimensionMismatch {
                context: format!("sample of length {} among samples of length {d}", x.len()),
            });
        }
        acc += x * x.transpose();
    }
    Ok(SymMatrix::symmetrize(acc / samples.len() as f64))
}
