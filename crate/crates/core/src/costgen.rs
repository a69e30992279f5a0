//! Adversarial cost sequences: the random diagonal process used by the
//! reference experiment, a constant process, and CSV replay for regression
//! fixtures.

use crate::dogd::{CostPair, DogdError};
use crate::matlin::SymMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostgenError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("replay file line {line}: {context}")]
    Schema { line: usize, context: String },
    #[error("replay table has no costs for round {t}, agent {agent}")]
    MissingEntry { t: usize, agent: usize },
    #[error(transparent)]
    Cost(#[from] DogdError),
}

pub type Result<T> = std::result::Result<T, CostgenError>;

/// Lower bound on uniform diagonal draws. The nominal range starts at zero,
/// which would permit merely semidefinite matrices; the floor keeps every
/// draw strictly positive definite at negligible distributional cost.
pub const UNIFORM_FLOOR: f64 = 1e-9;

/// How each agent's per-round cost pair is produced.
#[derive(Debug, Clone)]
pub enum CostProcess {
    /// Diagonal `Q` and `R` with entries drawn uniformly from
    /// `(UNIFORM_FLOOR, C/d]` and `(UNIFORM_FLOOR, C/k]`.
    UniformDiagonal { c: f64, d: usize, k: usize },
    Constant { q: SymMatrix, r: SymMatrix, c: f64 },
    Replay { table: ReplayTable, c: f64 },
}

impl CostProcess {
    /// The pair for `(agent, t)`. Uniform draws consume the stream in
    /// deterministic order; replay ignores the stream entirely.
    pub fn next_cost<R: Rng>(&self, rng: &mut R, agent: usize, t: usize) -> Result<CostPair> {
        match self {
            CostProcess::UniformDiagonal { c, d, k } => {
                let q = uniform_diagonal(rng, *d, c / *d as f64);
                let r = uniform_diagonal(rng, *k, c / *k as f64);
                Ok(CostPair::new(q, r, *c)?)
            }
            CostProcess::Constant { q, r, c } => Ok(CostPair::new(q.clone(), r.clone(), *c)?),
            CostProcess::Replay { table, c } => table.pair(agent, t, *c),
        }
    }
}

fn uniform_diagonal<R: Rng>(rng: &mut R, n: usize, hi: f64) -> SymMatrix {
    // hi - (hi - floor) * u maps u in [0, 1) onto (floor, hi].
    let diag = DVector::from_iterator(
        n,
        (0..n).map(|_| hi - (hi - UNIFORM_FLOOR) * rng.random::<f64>()),
    );
    SymMatrix::from_diagonal(&diag)
}

type Entries = Vec<(usize, usize, f64)>;

/// Cost matrices loaded from the replay CSV (`t,agent,kind,row,col,value`,
/// lower-triangle entries, kind `q` or `r`).
#[derive(Debug, Clone, Default)]
pub struct ReplayTable {
    entries: BTreeMap<(usize, usize), (Entries, Entries)>,
    d: usize,
    k: usize,
}

impl ReplayTable {
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut table = ReplayTable::default();
        let mut lines = reader.lines().enumerate();

        let (_, header) = lines.next().ok_or(CostgenError::Schema {
            line: 1,
            context: "empty file, expected the header".into(),
        })?;
        let header = header?;
        if header.trim() != "t,agent,kind,row,col,value" {
            return Err(CostgenError::Schema {
                line: 1,
                context: format!("bad header {header:?}"),
            });
        }

        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(CostgenError::Schema {
                    line: line_no,
                    context: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|e| CostgenError::Schema {
                    line: line_no,
                    context: format!("bad {what} {s:?}: {e}"),
                })
            };
            let t = parse_idx(fields[0], "round")?;
            let agent = parse_idx(fields[1], "agent")?;
            let kind = fields[2].trim();
            let row = parse_idx(fields[3], "row")?;
            let col = parse_idx(fields[4], "col")?;
            let value: f64 = fields[5].trim().parse().map_err(|e| CostgenError::Schema {
                line: line_no,
                context: format!("bad value {:?}: {e}", fields[5]),
            })?;
            if row < col {
                return Err(CostgenError::Schema {
                    line: line_no,
                    context: format!("upper-triangle entry ({row}, {col}); store row >= col"),
                });
            }
            let slot = table.entries.entry((t, agent)).or_default();
            match kind {
                "q" => {
                    table.d = table.d.max(row + 1);
                    slot.0.push((row, col, value));
                }
                "r" => {
                    table.k = table.k.max(row + 1);
                    slot.1.push((row, col, value));
                }
                other => {
                    return Err(CostgenError::Schema {
                        line: line_no,
                        context: format!("kind must be q or r, got {other:?}"),
                    });
                }
            }
        }
        Ok(table)
    }

    /// Rounds covered: one past the largest round index present.
    pub fn rounds(&self) -> usize {
        self.entries.keys().map(|(t, _)| t + 1).max().unwrap_or(0)
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.k
    }

    fn pair(&self, agent: usize, t: usize, c: f64) -> Result<CostPair> {
        let (q_entries, r_entries) = self
            .entries
            .get(&(t, agent))
            .ok_or(CostgenError::MissingEntry { t, agent })?;
        let build = |entries: &Entries, n: usize| {
            let mut m = DMatrix::zeros(n, n);
            for &(row, col, value) in entries {
                m[(row, col)] = value;
                m[(col, row)] = value;
            }
            SymMatrix::symmetrize(m)
        };
        Ok(CostPair::new(
            build(q_entries, self.d),
            build(r_entries, self.k),
            c,
        )?)
    }
}

/// Serialize `costs[t][agent]` to the replay schema with full-precision
/// decimals, so write-then-read reproduces the exact matrices.
pub fn write_replay_csv(path: &Path, costs: &[Vec<CostPair>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,agent,kind,row,col,value")?;
    for (t, round) in costs.iter().enumerate() {
        for (agent, pair) in round.iter().enumerate() {
            for (kind, m) in [("q", pair.q()), ("r", pair.r())] {
                for row in 0..m.dim() {
                    for col in 0..=row {
                        writeln!(
                            out,
                            "{t},{agent},{kind},{row},{col},{:.16e}",
                            m.matrix()[(row, col)]
                        )?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn constant_process_repeats() {
        let process = CostProcess::Constant {
            q: SymMatrix::identity(3),
            r: SymMatrix::identity(3),
            c: 30.0,
        };
        let mut rng = stream(1, 0, 0, Purpose::Cost);
        let a = process.next_cost(&mut rng, 0, 0).unwrap();
        let b = process.next_cost(&mut rng, 0, 7).unwrap();
        assert_eq!(a.q().matrix(), b.q().matrix());
        assert_eq!(a.r().matrix(), b.r().matrix());
    }

    #[test]
    fn uniform_entries_respect_range_and_traces() {
        let process = CostProcess::UniformDiagonal { c: 30.0, d: 3, k: 3 };
        let mut rng = stream(2, 0, 0, Purpose::Cost);
        for t in 0..10_000 {
            let pair = process.next_cost(&mut rng, 0, t).unwrap();
            for i in 0..3 {
                let q = pair.q().matrix()[(i, i)];
                let r = pair.r().matrix()[(i, i)];
                assert!(q > 0.0 && q <= 10.0, "q entry {q}");
                assert!(r > 0.0 && r <= 10.0, "r entry {r}");
            }
            assert!(pair.q().trace() <= 30.0);
            assert!(pair.r().trace() <= 30.0);
        }
    }

    #[test]
    fn uniform_mean_matches_half_range() {
        let process = CostProcess::UniformDiagonal { c: 30.0, d: 3, k: 3 };
        let mut rng = stream(3, 0, 0, Purpose::Cost);
        let rounds = 40_000;
        let mut sum = 0.0;
        for t in 0..rounds {
            let pair = process.next_cost(&mut rng, 0, t).unwrap();
            sum += pair.q().trace() + pair.r().trace();
        }
        let per_entry = sum / (rounds as f64 * 6.0);
        // Uniform(0, 10]: mean 5, sd 10/sqrt(12); 5 sigma over 240k entries.
        let slack = 5.0 * (10.0 / 12f64.sqrt()) / (rounds as f64 * 6.0).sqrt();
        assert!((per_entry - 5.0).abs() < slack, "mean {per_entry}");
    }

    #[test]
    fn generated_pairs_hold_bounds_in_bulk() {
        let process = CostProcess::UniformDiagonal { c: 7.0, d: 2, k: 4 };
        let mut rng = stream(4, 0, 0, Purpose::Cost);
        for t in 0..1_000_000 {
            // CostPair::new rejects trace or definiteness violations, so each
            // unwrap is itself the check; the asserts restate it locally.
            let pair = process.next_cost(&mut rng, 0, t).unwrap();
            assert!(pair.q().trace() <= 7.0 && pair.r().trace() <= 7.0);
        }
    }

    #[test]
    fn replay_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("costs.csv");
        let process = CostProcess::UniformDiagonal { c: 30.0, d: 3, k: 2 };
        let mut rng = stream(5, 0, 0, Purpose::Cost);
        let costs: Vec<Vec<CostPair>> = (0..5)
            .map(|t| {
                (0..2)
                    .map(|agent| process.next_cost(&mut rng, agent, t).unwrap())
                    .collect()
            })
            .collect();
        write_replay_csv(&path, &costs).unwrap();

        let table = ReplayTable::from_csv(&path).unwrap();
        assert_eq!(table.rounds(), 5);
        assert_eq!(table.state_dim(), 3);
        assert_eq!(table.input_dim(), 2);
        let replay = CostProcess::Replay { table, c: 30.0 };
        let mut unused = stream(6, 0, 0, Purpose::Cost);
        for (t, round) in costs.iter().enumerate() {
            for (agent, original) in round.iter().enumerate() {
                let replayed = replay.next_cost(&mut unused, agent, t).unwrap();
                assert_eq!(replayed.q().matrix(), original.q().matrix());
                assert_eq!(replayed.r().matrix(), original.r().matrix());
            }
        }
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first.csv");
        let second = dir.path().join("second.csv");
        let process = CostProcess::UniformDiagonal { c: 9.0, d: 2, k: 2 };
        let mut rng = stream(7, 0, 0, Purpose::Cost);
        let costs: Vec<Vec<CostPair>> = (0..3)
            .map(|t| (0..2).map(|a| process.next_cost(&mut rng, a, t).unwrap()).collect())
            .collect();
        write_replay_csv(&first, &costs).unwrap();

        let table = ReplayTable::from_csv(&first).unwrap();
        let replay = CostProcess::Replay { table, c: 9.0 };
        let mut unused = stream(8, 0, 0, Purpose::Cost);
        let reread: Vec<Vec<CostPair>> = (0..3)
            .map(|t| {
                (0..2)
                    .map(|a| replay.next_cost(&mut unused, a, t).unwrap())
                    .collect()
            })
            .collect();
        write_replay_csv(&second, &reread).unwrap();

        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();

        let bad_header = dir.path().join("h.csv");
        std::fs::write(&bad_header, "time,agent\n").unwrap();
        match ReplayTable::from_csv(&bad_header) {
            Err(CostgenError::Schema { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }

        let truncated = dir.path().join("t.csv");
        std::fs::write(
            &truncated,
            "t,agent,kind,row,col,value\n0,0,q,0,0,1.0\n0,0,q,1\n",
        )
        .unwrap();
        match ReplayTable::from_csv(&truncated) {
            Err(CostgenError::Schema { line: 3, .. }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }

        let bad_kind = dir.path().join("k.csv");
        std::fs::write(&bad_kind, "t,agent,kind,row,col,value\n0,0,x,0,0,1.0\n").unwrap();
        match ReplayTable::from_csv(&bad_kind) {
            Err(CostgenError::Schema { line: 2, context }) => {
                assert!(context.contains("kind"), "{context}");
            }
            other => panic!("expected kind error, got {other:?}"),
        }

        let upper = dir.path().join("u.csv");
        std::fs::write(&upper, "t,agent,kind,row,col,value\n0,0,q,0,1,1.0\n").unwrap();
        assert!(matches!(
            ReplayTable::from_csv(&upper),
            Err(CostgenError::Schema { line: 2, .. })
        ));

        let bad_value = dir.path().join("v.csv");
        std::fs::write(&bad_value, "t,agent,kind,row,col,value\n0,0,q,0,0,abc\n").unwrap();
        assert!(matches!(
            ReplayTable::from_csv(&bad_value),
            Err(CostgenError::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn missing_round_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sparse.csv");
        std::fs::write(
            &path,
            "t,agent,kind,row,col,value\n0,0,q,0,0,1.0\n0,0,r,0,0,1.0\n",
        )
        .unwrap();
        let table = ReplayTable::from_csv(&path).unwrap();
        let replay = CostProcess::Replay { table, c: 5.0 };
        let mut rng = stream(9, 0, 0, Purpose::Cost);
        assert!(replay.next_cost(&mut rng, 0, 0).is_ok());
        assert!(matches!(
            replay.next_cost(&mut rng, 1, 0),
            Err(CostgenError::MissingEntry { t: 0, agent: 1 })
        ));
    }

    #[test]
    fn uniform_draws_replay_identically() {
        let process = CostProcess::UniformDiagonal { c: 30.0, d: 3, k: 3 };
        let mut r1 = stream(10, 4, 2, Purpose::Cost);
        let mut r2 = stream(10, 4, 2, Purpose::Cost);
        for t in 0..20 {
            let a = process.next_cost(&mut r1, 2, t).unwrap();
            let b = process.next_cost(&mut r2, 2, t).unwrap();
            assert_eq!(a.q().matrix(), b.q().matrix());
            assert_eq!(a.r().matrix(), b.r().matrix());
        }
    }

    #[test]
    fn gradient_matrices_stay_within_frobenius_budget() {
        // ||blockdiag(Q, R)||_F <= sqrt(2) C whenever both traces are within C.
        let process = CostProcess::UniformDiagonal { c: 30.0, d: 3, k: 3 };
        let mut rng = stream(11, 0, 0, Purpose::Cost);
        for t in 0..10_000 {
            let pair = process.next_cost(&mut rng, 0, t).unwrap();
            let norm = pair.block_diag().norm_f();
            assert!(norm <= 2f64.sqrt() * 30.0 + 1e-12, "norm {norm}");
        }
    }
}
