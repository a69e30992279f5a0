//! The communication matrix: construction, validation, its second singular
//! value, and the geometric mixing bound it implies.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("mixing matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("column {col} sums to {sum}, expected 1")]
    ColSum { col: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("communication graph splits into {components} components")]
    Disconnected { components: usize },
    #[error("second singular value {beta} is not below 1; consensus cannot contract")]
    NotContractive { beta: f64 },
    #[error("cycle topology needs at least 3 agents, got {m}")]
    TooSmallForCycle { m: usize },
    #[error("self-weight {w} outside (0, 1)")]
    BadSelfWeight { w: f64 },
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// Validated doubly stochastic mixing matrix with its second largest singular
/// value cached.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    m: usize,
    p: DMatrix<f64>,
    beta: f64,
}

impl MixingMatrix {
    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Second largest singular value; consensus error contracts like
    /// `beta^k`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.p[(from, to)]
    }
}

/// Second largest singular value of a square matrix; 0 for a 1x1 matrix.
pub fn second_singular_value(p: &DMatrix<f64>) -> f64 {
    let mut sv: Vec<f64> = p.singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv.len() < 2 {
        0.0
    } else {
        sv[1]
    }
}

/// Checks double stochasticity, nonnegativity, connectivity, and contraction,
/// each violation class reported distinctly.
pub fn validate(p_raw: DMatrix<f64>, tol: f64) -> Result<MixingMatrix> {
    let m = p_raw.nrows();
    if p_raw.ncols() != m {
        return Err(NetworkError::NotSquare {
            rows: p_raw.nrows(),
            cols: p_raw.ncols(),
        });
    }
    for i in 0..m {
        for j in 0..m {
            if p_raw[(i, j)] < -tol {
                return Err(NetworkError::NegativeEntry {
                    row: i,
                    col: j,
                    value: p_raw[(i, j)],
                });
            }
        }
    }
    for i in 0..m {
        let sum: f64 = p_raw.row(i).iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(NetworkError::RowSum { row: i, sum });
        }
    }
    for j in 0..m {
        let sum: f64 = p_raw.column(j).iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(NetworkError::ColSum { col: j, sum });
        }
    }

    // Undirected reachability over entries above tol.
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            if !seen[j] && (p_raw[(i, j)] > tol || p_raw[(j, i)] > tol) {
                seen[j] = true;
                reached += 1;
                stack.push(j);
            }
        }
    }
    if reached < m {
        // Count all components for the report.
        let mut comp = vec![usize::MAX; m];
        let mut components = 0;
        for start in 0..m {
            if comp[start] != usize::MAX {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            comp[start] = components;
            while let Some(i) = stack.pop() {
                for j in 0..m {
                    if comp[j] == usize::MAX && (p_raw[(i, j)] > tol || p_raw[(j, i)] > tol) {
                        comp[j] = components;
                        stack.push(j);
                    }
                }
            }
        }
        return Err(NetworkError::Disconnected { components });
    }

    let beta = second_singular_value(&p_raw);
    if m > 1 && beta >= 1.0 - 1e-12 {
        return Err(NetworkError::NotContractive { beta });
    }
    Ok(MixingMatrix { m, p: p_raw, beta })
}

/// Cycle graph: `self_weight` on the diagonal, the remainder split evenly
/// between the two ring neighbors.
pub fn cycle_topology(m: usize, self_weight: f64) -> Result<MixingMatrix> {
    if m < 3 {
        return Err(NetworkError::TooSmallForCycle { m });
    }
    if !(self_weight > 0.0 && self_weight < 1.0) {
        return Err(NetworkError::BadSelfWeight { w: self_weight });
    }
    let side = (1.0 - self_weight) / 2.0;
    let mut p = DMatrix::zeros(m, m);
    for i in 0..m {
        p[(i, i)] = self_weight;
        p[(i, (i + 1) % m)] += side;
        p[(i, (i + m - 1) % m)] += side;
    }
    validate(p, 1e-12)
}

/// Worst observed slack in `sum_j |[P^k]_{ji} - 1/m| <= sqrt(m) beta^k` over
/// `k = 1..=k_max` and all columns.
#[derive(Debug, Clone)]
pub struct MixingBoundReport {
    pub k_max: usize,
    /// Minimum of `rhs - lhs`; negative means the bound failed somewhere.
    pub worst_slack: f64,
    pub worst_k: usize,
    pub worst_column: usize,
    pub all_pass: bool,
}

pub fn mixing_bound_check(p: &MixingMatrix, k_max: usize) -> MixingBoundReport {
    let m = p.agents();
    let uniform = 1.0 / m as f64;
    let sqrt_m = (m as f64).sqrt();
    let mut power = DMatrix::identity(m, m);
    let mut report = MixingBoundReport {
        k_max,
        worst_slack: f64::INFINITY,
        worst_k: 0,
        worst_column: 0,
        all_pass: true,
    };
    for k in 1..=k_max {
        power = &power * p.p();
        let rhs = sqrt_m * p.beta().powi(k as i32);
        for i in 0..m {
            let lhs: f64 = power.column(i).iter().map(|v| (v - uniform).abs()).sum();
            let slack = rhs - lhs;
            if slack < report.worst_slack {
                report.worst_slack = slack;
                report.worst_k = k;
                report.worst_column = i;
            }
        }
    }
    report.all_pass = report.worst_slack >= -1e-12;
    report
}
