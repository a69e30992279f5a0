//! Dense symmetric-matrix kernels: eigendecomposition, PSD projection, the
//! svec/smat isometry, minimum-norm least squares, and discrete Lyapunov
//! solves. Everything downstream (projections, policy extraction, stability
//! certificates) is built on these.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatlinError {
    #[error("matrix not symmetric: max |a_ij - a_ji| = {max_asym:.3e} for dim {dim}")]
    NotSymmetric { dim: usize, max_asym: f64 },
    #[error("matrix not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{op} failed to converge on a {dim}x{dim} matrix (condition estimate: {})",
            cond.map(|c| format!("{c:.3e}")).unwrap_or_else(|| "unavailable".into()))]
    NumericFailure {
        op: &'static str,
        dim: usize,
        cond: Option<f64>,
    },
    #[error("rank-deficient operator ({rows}x{cols}): sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e}")]
    RankDeficient {
        rows: usize,
        cols: usize,
        sigma_min: f64,
        sigma_max: f64,
    },
    #[error("vector length {len} is not a triangular number n(n+1)/2")]
    BadSvecLength { len: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("matrix is not Schur stable: spectral radius = {radius:.9}")]
    Unstable { radius: f64 },
    #[error("matrix is defective: assembled eigenbasis has rank {found} < {dim}")]
    Defective { dim: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, MatlinError>;

/// Relative asymmetry tolerated by the `SymMatrix` constructor.
pub const SYM_TOL: f64 = 1e-12;

/// Square matrix that is symmetric by construction. The constructor rejects
/// input whose asymmetry exceeds `SYM_TOL * max(1, ||A||_F)` and exactly
/// symmetrizes what it accepts, so downstream code never sees `a_ij != a_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(MatlinError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let mut max_asym = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..i {
                max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if max_asym > SYM_TOL * a.norm().max(1.0) {
            return Err(MatlinError::NotSymmetric {
                dim: a.nrows(),
                max_asym,
            });
        }
        Ok(Self::symmetrize(a))
    }

    /// Force-symmetrize; for results of operations that are symmetric up to
    /// roundoff (eigen reconstructions, Lyapunov solves).
    pub fn symmetrize(mut a: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "symmetrize expects a square matrix");
        for i in 0..a.nrows() {
            for j in 0..i {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        Self(a)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        Self(DMatrix::from_diagonal(d))
    }

    /// blockdiag(upper, lower); the off-diagonal blocks are zero.
    pub fn block_diag(upper: &SymMatrix, lower: &SymMatrix) -> Self {
        let (n, m) = (upper.dim(), lower.dim());
        let mut out = DMatrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(upper.matrix());
        out.view_mut((n, n), (m, m)).copy_from(lower.matrix());
        Self(out)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn norm_f(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self(&self.0 - &other.0)
    }
}

/// Eigendecomposition of a symmetric matrix; `values` sorted descending with
/// matching `vectors` columns, which are orthonormal.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// V f(Lambda) V^T for an entrywise spectral map.
    pub fn map_reconstruct(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let fv = DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        SymMatrix::symmetrize(&self.vectors * DMatrix::from_diagonal(&fv) * self.vectors.transpose())
    }
}

fn cond_estimate(a: &DMatrix<f64>) -> Option<f64> {
    let svd = nalgebra::SVD::try_new(a.clone(), false, false, f64::EPSILON, 10_000)?;
    let sv = &svd.singular_values;
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Symmetric eigendecomposition, eigenvalues sorted descending.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenPairs> {
    let n = s.dim();
    let se = nalgebra::SymmetricEigen::try_new(s.matrix().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| MatlinError::NumericFailure {
            op: "symmetric eigendecomposition",
            dim: n,
            cond: cond_estimate(s.matrix()),
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok(EigenPairs { values, vectors })
}

/// Nearest (Frobenius) positive semidefinite matrix: negative eigenvalues
/// clipped to zero.
pub fn psd_project(s: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    if eig.min() >= 0.0 {
        return Ok(s.clone());
    }
    Ok(eig.map_reconstruct(|l| l.max(0.0)))
}

/// Largest singular value of any rectangular matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0f64, f64::max)
}

/// Spectral radius via complex eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
}

/// Isometric vectorization of a symmetric matrix: lower triangle in row-major
/// order `(0,0), (1,0), (1,1), (2,0), ...`, off-diagonal entries scaled by
/// sqrt(2) so that `svec(A) . svec(B) = <A, B>_F`.
pub fn svec(s: &SymMatrix) -> DVector<f64> {
    let n = s.dim();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            out[idx] = if i == j {
                s.matrix()[(i, j)]
            } else {
                sqrt2 * s.matrix()[(i, j)]
            };
            idx += 1;
        }
    }
    out
}

/// Inverse of [`svec`]. Errors when the length is not triangular.
pub fn smat(v: &DVector<f64>) -> Result<SymMatrix> {
    let len = v.len();
    let n = ((-1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    if n * (n + 1) / 2 != len {
        return Err(MatlinError::BadSvecLength { len });
    }
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut out = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            if i == j {
                out[(i, i)] = v[idx];
            } else {
                let val = inv_sqrt2 * v[idx];
                out[(i, j)] = val;
                out[(j, i)] = val;
            }
            idx += 1;
        }
    }
    Ok(SymMatrix(out))
}

/// Relative threshold below which a singular value marks rank deficiency.
pub const RANK_TOL: f64 = 1e-10;

fn checked_svd(e: &DMatrix<f64>, op: &'static str) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    nalgebra::SVD::try_new(e.clone(), true, true, f64::EPSILON, 100_000).ok_or_else(|| {
        MatlinError::NumericFailure {
            op,
            dim: e.nrows().max(e.ncols()),
            cond: None,
        }
    })
}

fn rank_gate(e: &DMatrix<f64>, sv: &DVector<f64>) -> Result<(f64, f64)> {
    let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    // Full row rank is what the affine projection needs; only the first
    // min(rows, cols) singular values exist, so rows > cols is deficient too.
    if e.nrows() > e.ncols() || sigma_min < RANK_TOL * sigma_max || sigma_max == 0.0 {
        return Err(MatlinError::RankDeficient {
            rows: e.nrows(),
            cols: e.ncols(),
            sigma_min: if sigma_min.is_finite() { sigma_min } else { 0.0 },
            sigma_max,
        });
    }
    Ok((sigma_min, sigma_max))
}

/// Minimum-norm solution of `E z = b` for an operator with full row rank.
pub fn lstsq_min_norm(e: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != e.nrows() {
        return Err(MatlinError::DimensionMismatch {
            context: format!("rhs has length {}, operator has {} rows", b.len(), e.nrows()),
        });
    }
    let svd = checked_svd(e, "SVD for least squares")?;
    rank_gate(e, &svd.singular_values)?;
    svd.solve(b, 0.0).map_err(|_| MatlinError::NumericFailure {
        op: "SVD solve",
        dim: e.nrows().max(e.ncols()),
        cond: None,
    })
}

/// Moore-Penrose pseudoinverse, gated on full row rank like [`lstsq_min_norm`].
pub(crate) fn pinv_full_row_rank(e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = checked_svd(e, "SVD for pseudoinverse")?;
    rank_gate(e, &svd.singular_values)?;
    svd.clone().pseudo_inverse(0.0).map_err(|_| MatlinError::NumericFailure {
        op: "pseudoinverse",
        dim: e.nrows().max(e.ncols()),
        cond: None,
    })
}

/// Residual tolerance (relative to max(1, ||W||_F)) for Lyapunov solutions.
pub const LYAPUNOV_TOL: f64 = 1e-10;

/// Dimension cutoff between the direct Kronecker solve and fixed-point
/// iteration in [`solve_discrete_lyapunov`].
const LYAPUNOV_DIRECT_MAX_DIM: usize = 32;

/// Solve `X = M X M^T + W` for Schur-stable `M`. Direct Kronecker solve up to
/// 32x32, Smith doubling iteration beyond.
pub fn solve_discrete_lyapunov(m: &DMatrix<f64>, w: &SymMatrix) -> Result<SymMatrix> {
    let n = w.dim();
    if m.nrows() != n || m.ncols() != n {
        return Err(MatlinError::DimensionMismatch {
            context: format!("M is {}x{}, W is {n}x{n}", m.nrows(), m.ncols()),
        });
    }
    let radius = spectral_radius(m);
    if !(radius < 1.0 - 1e-12) {
        return Err(MatlinError::Unstable { radius });
    }
    let scale = w.norm_f().max(1.0);
    let residual_of = |x: &DMatrix<f64>| (x - m * x * m.transpose() - w.matrix()).norm();

    let x = if n <= LYAPUNOV_DIRECT_MAX_DIM {
        let kron = m.kronecker(m);
        let sys = DMatrix::identity(n * n, n * n) - kron;
        let rhs = DVector::from_column_slice(w.matrix().as_slice());
        let sol = sys.lu().solve(&rhs).ok_or(MatlinError::NumericFailure {
            op: "Lyapunov linear solve",
            dim: n * n,
            cond: None,
        })?;
        DMatrix::from_column_slice(n, n, sol.as_slice())
    } else {
        // Smith doubling: accumulates sum_{i < 2^j} M^i W M^i^T.
        let mut x = w.matrix().clone();
        let mut mk = m.clone();
        let mut done = false;
        for _ in 0..200 {
            if residual_of(&x) <= LYAPUNOV_TOL * scale {
                done = true;
                break;
            }
            x = &x + &mk * &x * mk.transpose();
            mk = &mk * &mk;
        }
        if !done && residual_of(&x) > LYAPUNOV_TOL * scale {
            return Err(MatlinError::NumericFailure {
                op: "Lyapunov fixed-point iteration",
                dim: n,
                cond: Some(1.0 / (1.0 - radius * radius)),
            });
        }
        x
    };

    if residual_of(&x) > LYAPUNOV_TOL * scale {
        return Err(MatlinError::NumericFailure {
            op: "Lyapunov solve residual check",
            dim: n,
            cond: Some(1.0 / (1.0 - radius * radius)),
        });
    }
    Ok(SymMatrix::symmetrize(x))
}

/// Real eigenbasis `H` of a diagonalizable real matrix: columns are unit-norm
/// eigenvectors; a complex pair `a +- bi` contributes two real columns
/// spanning its invariant plane, so `H^-1 M H` is block diagonal with scaled
/// rotation blocks. Errors with [`MatlinError::Defective`] when no such basis
/// exists numerically.
pub fn real_eig_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(MatlinError::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    let scale = m.norm().max(1.0);
    let tol = 1e-8 * scale;
    let eigs = m.complex_eigenvalues();

    // Cluster eigenvalues: reals (|im| <= tol) grouped by proximity, complex
    // ones kept as conjugate-pair representatives with im > 0.
    let mut reals: Vec<(f64, usize)> = Vec::new();
    let mut pairs: Vec<(f64, f64, usize)> = Vec::new();
    for e in eigs.iter() {
        if e.im.abs() <= tol {
            match reals.iter_mut().find(|(v, _)| (*v - e.re).abs() <= tol) {
                Some((_, count)) => *count += 1,
                None => reals.push((e.re, 1)),
            }
        } else if e.im > 0.0 {
            match pairs
                .iter_mut()
                .find(|(re, im, _)| (*re - e.re).abs() <= tol && (*im - e.im).abs() <= tol)
            {
                Some((_, _, count)) => *count += 1,
                None => pairs.push((e.re, e.im, 1)),
            }
        }
    }
    reals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    for &(val, mult) in &reals {
        let shifted = m - DMatrix::<f64>::identity(n, n) * val;
        let basis = nullspace(&shifted, tol);
        if basis.len() < mult {
            return Err(MatlinError::Defective {
                dim: n,
                found: columns.len() + basis.len(),
            });
        }
        for v in basis.into_iter().take(mult) {
            columns.push(v.normalize());
        }
    }
    for &(re, im, mult) in &pairs {
        // Real 2n x 2n system whose nullspace encodes complex eigenvectors
        // p + i q of a +- bi.
        let mut aug = DMatrix::zeros(2 * n, 2 * n);
        let shifted = m - DMatrix::<f64>::identity(n, n) * re;
        aug.view_mut((0, 0), (n, n)).copy_from(&shifted);
        aug.view_mut((n, n), (n, n)).copy_from(&shifted);
        for i in 0..n {
            aug[(i, n + i)] = im;
            aug[(n + i, i)] = -im;
        }
        let basis = nullspace(&aug, tol);
        let mut taken = 0;
        for v in basis {
            if taken == mult {
                break;
            }
            let p = DVector::from_iterator(n, (0..n).map(|i| v[i]));
            let q = DVector::from_iterator(n, (0..n).map(|i| v[n + i]));
            let s = ((p.norm_squared() + q.norm_squared()) / 2.0).sqrt();
            if s <= tol {
                continue;
            }
            let (p, q) = (p / s, q / s);
            // Keep only pairs that enlarge the span; rotated duplicates of an
            // already-chosen complex eigenvector do not.
            let mut trial: Vec<DVector<f64>> = columns.clone();
            trial.push(p.clone());
            trial.push(q.clone());
            if numeric_rank(&trial) == trial.len() {
                columns.push(p);
                columns.push(q);
                taken += 1;
            }
        }
        if taken < mult {
            return Err(MatlinError::Defective {
                dim: n,
                found: columns.len(),
            });
        }
    }

    if columns.len() != n {
        return Err(MatlinError::Defective {
            dim: n,
            found: columns.len(),
        });
    }
    let h = DMatrix::from_columns(&columns);
    let h_inv = h.clone().try_inverse().ok_or(MatlinError::Defective { dim: n, found: n })?;
    // If the reconstruction through H is poor the basis is numerically
    // useless even if formally full rank.
    let l = &h_inv * m * &h;
    if (&h * &l * &h_inv - m).norm() > 1e-7 * scale {
        return Err(MatlinError::Defective { dim: n, found: n });
    }
    Ok(h)
}

fn nullspace(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let svd = nalgebra::SVD::new(m.clone(), false, true);
    let vt = svd.v_t.expect("requested v_t");
    let sv = svd.singular_values;
    let mut out = Vec::new();
    for i in 0..sv.len() {
        if sv[i] <= tol {
            out.push(vt.row(i).transpose());
        }
    }
    // Columns of V beyond the number of singular values also span the kernel
    // for wide matrices; not needed for the square systems used here.
    out
}

fn numeric_rank(cols: &[DVector<f64>]) -> usize {
    if cols.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(cols);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * max.max(1.0)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_sym(n: usize, rng: &mut impl Rng) -> SymMatrix {
        SymMatrix::symmetrize(DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0)))
    }

    #[test]
    fn sym_constructor_rejects_large_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(SymMatrix::new(a), Err(MatlinError::NotSymmetric { .. })));
    }

    #[test]
    fn sym_constructor_symmetrizes_roundoff() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0 + 1e-14, 2.0, 1.0]);
        let s = SymMatrix::new(a).unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);
    }

    #[test]
    fn eig_known_two_by_two() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = sym_eig(&s).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for n in 1..=8 {
            for _ in 0..6 {
                let s = random_sym(n, &mut rng);
                let e = sym_eig(&s).unwrap();
                let recon = e.map_reconstruct(|l| l);
                let scale = s.norm_f().max(1.0);
                assert!((recon.matrix() - s.matrix()).norm() <= 1e-9 * scale);
                let vtv = e.vectors.transpose() * &e.vectors;
                assert!((vtv - DMatrix::<f64>::identity(n, n)).norm() <= 1e-10);
                for i in 1..n {
                    assert!(e.values[i - 1] >= e.values[i]);
                }
            }
        }
    }

    // Hand-derived: eigenvalues of [[1,2],[2,1]] are 3 and -1; dropping the
    // negative one leaves 3 * outer(v, v) with v = (1,1)/sqrt(2).
    #[test]
    fn psd_project_hand_case() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        let p = psd_project(&s).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 1.5, 1.5]);
        assert!((p.matrix() - expected).norm() <= 1e-12);
    }

    #[test]
    fn psd_project_properties() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..30 {
            let s = random_sym(4, &mut rng);
            let p = psd_project(&s).unwrap();
            let eig = sym_eig(&p).unwrap();
            assert!(eig.min() >= -1e-10);
            // Idempotence.
            let pp = psd_project(&p).unwrap();
            assert!((pp.matrix() - p.matrix()).norm() <= 1e-9);
            // Non-expansiveness against a second projected point.
            let t = random_sym(4, &mut rng);
            let q = psd_project(&t).unwrap();
            assert!((p.matrix() - q.matrix()).norm() <= (s.matrix() - t.matrix()).norm() + 1e-9);
        }
    }

    #[test]
    fn psd_project_keeps_psd_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let s = SymMatrix::symmetrize(&g * g.transpose());
        let p = psd_project(&s).unwrap();
        assert!((p.matrix() - s.matrix()).norm() <= 1e-12 * s.norm_f().max(1.0));
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let m = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
            // Independent oracle: power iteration on M^T M.
            let mtm = m.transpose() * &m;
            let mut v = DVector::from_element(3, 1.0f64).normalize();
            for _ in 0..500 {
                v = (&mtm * v).normalize();
            }
            let oracle = (&mtm * &v).dot(&v).sqrt();
            assert_abs_diff_eq!(spectral_norm(&m), oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn spectral_norm_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -4.0, 2.0]));
        assert_abs_diff_eq!(spectral_norm(&m), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn svec_ordering_and_inner_product() {
        let s = SymMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 5.0]));
        let v = svec(&s);
        assert_eq!(v.as_slice(), &[3.0, 0.0, 5.0]);
        // <I2, I2>_F = 2.
        let i2 = SymMatrix::identity(2);
        assert_abs_diff_eq!(svec(&i2).dot(&svec(&i2)), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn svec_smat_roundtrip_and_isometry() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..200 {
            let a = random_sym(4, &mut rng);
            let b = random_sym(4, &mut rng);
            let frob: f64 = a
                .matrix()
                .iter()
                .zip(b.matrix().iter())
                .map(|(x, y)| x * y)
                .sum();
            let dot = svec(&a).dot(&svec(&b));
            assert_abs_diff_eq!(dot, frob, epsilon = 1e-12 * frob.abs().max(1.0));
            let rt = smat(&svec(&a)).unwrap();
            assert!((rt.matrix() - a.matrix()).norm() <= 1e-14 * a.norm_f().max(1.0));
        }
    }

    #[test]
    fn smat_rejects_bad_length() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(smat(&v), Err(MatlinError::BadSvecLength { len: 4 })));
    }

    #[test]
    fn lstsq_rank_deficient_errors() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            lstsq_min_norm(&e, &b),
            Err(MatlinError::RankDeficient { .. })
        ));
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let e = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-2.0..2.0));
            let b = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let z = lstsq_min_norm(&e, &b).unwrap();
            assert!((&e * &z - &b).norm() <= 1e-10);
            // Independent route: z = E^T (E E^T)^{-1} b.
            let gram = &e * e.transpose();
            let direct = e.transpose() * gram.lu().solve(&b).unwrap();
            assert!((z - direct).norm() <= 1e-8);
        }
    }

    // Oracle from the definition: X = sum_k M^k W (M^k)^T, truncated at 50
    // terms (geometric tail is ~1e-70 here).
    fn series_lyapunov(m: &DMatrix<f64>, w: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = w.nrows();
        let mut x = DMatrix::<f64>::zeros(n, n);
        let mut mk = DMatrix::<f64>::identity(n, n);
        for _ in 0..terms {
            x += &mk * w * mk.transpose();
            mk = m * &mk;
        }
        x
    }

    #[test]
    fn lyapunov_scalar_benchmark_case() {
        let m = DMatrix::<f64>::identity(3, 3) * 0.196;
        let w = SymMatrix::identity(3);
        let x = solve_discrete_lyapunov(&m, &w).unwrap();
        let oracle = series_lyapunov(&m, w.matrix(), 50);
        assert!((x.matrix() - oracle).norm() <= 1e-10);
        // 1 / (1 - 0.196^2), frozen from the series oracle.
        assert_abs_diff_eq!(x.matrix()[(0, 0)], 1.039_950_747_9, epsilon = 1e-8);
        assert_abs_diff_eq!(x.matrix()[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_random_stable_residuals() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        for _ in 0..10 {
            let raw = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let m = &raw * (0.8 / spectral_radius(&raw).max(1e-9));
            let g = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let w = SymMatrix::symmetrize(&g * g.transpose());
            let x = solve_discrete_lyapunov(&m, &w).unwrap();
            let res = (x.matrix() - &m * x.matrix() * m.transpose() - w.matrix()).norm();
            assert!(res <= 1e-10 * w.norm_f().max(1.0));
            assert!(sym_eig(&x).unwrap().min() >= -1e-9 * x.norm_f().max(1.0));
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let m = DMatrix::<f64>::identity(2, 2) * 1.05;
        let w = SymMatrix::identity(2);
        assert!(matches!(
            solve_discrete_lyapunov(&m, &w),
            Err(MatlinError::Unstable { .. })
        ));
    }

    #[test]
    fn lyapunov_large_dim_fixed_point_path() {
        let n = 40;
        let m = DMatrix::<f64>::identity(n, n) * 0.5;
        let w = SymMatrix::identity(n);
        let x = solve_discrete_lyapunov(&m, &w).unwrap();
        let expected = DMatrix::<f64>::identity(n, n) * (4.0 / 3.0);
        assert!((x.matrix() - expected).norm() <= 1e-9 * (n as f64));
    }

    #[test]
    fn spectral_radius_rotation_is_one() {
        let th = 0.7f64;
        let m = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert_abs_diff_eq!(spectral_radius(&m), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn real_eig_basis_distinct_real() {
        let h_true = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.3]));
        let m = &h_true * d * h_true.clone().try_inverse().unwrap();
        let h = real_eig_basis(&m).unwrap();
        let h_inv = h.clone().try_inverse().unwrap();
        let l = &h_inv * &m * &h;
        // Similar through H: off-diagonals vanish.
        assert!(l[(0, 1)].abs() + l[(1, 0)].abs() <= 1e-8);
    }

    #[test]
    fn real_eig_basis_complex_pair() {
        // 0.9 * rotation: eigenvalues 0.9 e^{+-i theta}.
        let th = 0.6f64;
        let m = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.9;
        let h = real_eig_basis(&m).unwrap();
        let h_inv = h.clone().try_inverse().unwrap();
        let l = &h_inv * &m * &h;
        assert_abs_diff_eq!(spectral_norm(&l), 0.9, epsilon = 1e-8);
    }

    #[test]
    fn real_eig_basis_scaled_identity_is_orthonormal() {
        let m = DMatrix::<f64>::identity(3, 3) * 0.196;
        let h = real_eig_basis(&m).unwrap();
        assert!((h.transpose() * &h - DMatrix::<f64>::identity(3, 3)).norm() <= 1e-10);
    }

    #[test]
    fn real_eig_basis_rejects_defective() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(real_eig_basis(&m), Err(MatlinError::Defective { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, .. ProptestConfig::default() })]

        #[test]
        fn prop_psd_project_output_is_psd(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let s = random_sym(3, &mut rng);
            let p = psd_project(&s).unwrap();
            prop_assert!(sym_eig(&p).unwrap().min() >= -1e-10);
        }

        #[test]
        fn prop_svec_isometry(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = random_sym(5, &mut rng);
            let n2: f64 = svec(&a).norm_squared();
            let frob2 = a.norm_f().powi(2);
            prop_assert!((n2 - frob2).abs() <= 1e-10 * frob2.max(1.0));
        }
    }
}
