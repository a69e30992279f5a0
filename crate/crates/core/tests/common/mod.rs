// Shared helpers for the integration suite. Each test target compiles this
// module separately, so not every helper is used from every target.
#![allow(dead_code)]

use dolq::harness::ExperimentConfig;
use dolq::matlin::SymMatrix;
use dolq::sdp::FeasibleSetSpec;
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// Prints one verdict line per acceptance criterion and then enforces it.
pub fn criterion(n: usize, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} - {detail}");
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Tiny deterministic generator for test inputs; quality is irrelevant,
/// stability across platforms is the point.
pub struct Lcg(pub u64);

impl Lcg {
    /// Uniform-ish draw in [-1, 1].
    pub fn unit(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

/// The five-agent reference experiment; `t = None` leaves horizon selection
/// to the multiplier rule.
pub fn reference_config(t: Option<u64>, runs: u32, seed: u64) -> ExperimentConfig {
    let mut v = json!({
        "m": 5,
        "d": 3,
        "k": 3,
        "kappa": 1.5,
        "gamma": 0.4,
        "C": 30.0,
        "sigma2": 1.0,
        "lambda2": 3.0,
        "system": "reference",
        "topology": {"cycle": {"self_weight": 0.6}},
        "benchmark": "reference",
        "runs": runs,
        "master_seed": seed
    });
    if let Some(t) = t {
        v["T"] = json!(t);
    }
    serde_json::from_value(v).unwrap()
}

/// A two-agent configuration small enough for CLI smoke runs.
pub fn smoke_config_value(t: u64, runs: u32, seed: u64) -> Value {
    json!({
        "m": 2,
        "d": 2,
        "k": 2,
        "kappa": 1.5,
        "gamma": 0.4,
        "C": 5.0,
        "sigma2": 1.0,
        "lambda2": 2.0,
        "system": "reference",
        "topology": {"explicit": {"matrix": [[0.5, 0.5], [0.5, 0.5]]}},
        "benchmark": {"ks": [[0.0, 0.0], [0.0, 0.0]]},
        "T": t,
        "runs": runs,
        "master_seed": seed
    })
}

/// One-dimensional plant with a = 0.5, b = 1, w = 1 and trace budget 4. Small
/// enough that the nearest feasible point can be found by brute force.
pub fn scalar_spec() -> FeasibleSetSpec {
    FeasibleSetSpec::new(
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        SymMatrix::identity(1),
        4.0,
        1.0,
    )
    .unwrap()
}

/// Brute-force nearest feasible point for [`scalar_spec`], independent of the
/// projection code. The affine constraint pins
/// `s_uu = 0.75 s_xx - s_xu - 1`, reducing the set to a 2-variable region
/// bounded by the determinant curve of the PSD cone (a hyperbola in
/// `(s_xx, s_xu)`) and the trace chord. The minimizer is either the interior
/// stationary point or sits on one of those boundary pieces, so each case is
/// searched exhaustively on its own terms: calculus for the stationary point,
/// an exact 1-d projection for the chord, and a refined unimodal grid along
/// each hyperbola arc. A naive 2-d grid is useless here: for far starts the
/// objective is nearly flat along the boundary, and grid minima drift far
/// from the true projection.
pub fn nearest_feasible_scalar(y: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!((y.nrows(), y.ncols()), (2, 2), "scalar oracle wants 2x2");
    let (y11, y12, y22) = (y[(0, 0)], y[(0, 1)], y[(1, 1)]);
    let suu_of = |sxx: f64, sxu: f64| 0.75 * sxx - sxu - 1.0;
    let dist2 = |sxx: f64, sxu: f64| {
        let suu = suu_of(sxx, sxu);
        // Frobenius over the symmetric matrix, so the off-diagonal counts
        // twice.
        (sxx - y11).powi(2) + 2.0 * (sxu - y12).powi(2) + (suu - y22).powi(2)
    };
    let feasible = |sxx: f64, sxu: f64| {
        let suu = suu_of(sxx, sxu);
        sxx >= -1e-9
            && suu >= -1e-9
            && sxx * suu - sxu * sxu >= -1e-9
            && sxx + suu <= 4.0 + 1e-9
    };

    // Interior case: the unconstrained stationary point. If it is feasible it
    // is the global minimizer and nothing else can beat it.
    {
        let r1 = y11 + 0.75 * (1.0 + y22);
        let r2 = 2.0 * y12 - 1.0 - y22;
        let det = 4.125;
        let sxx = (3.0 * r1 + 0.75 * r2) / det;
        let sxu = (1.5625 * r2 + 0.75 * r1) / det;
        if feasible(sxx, sxu) {
            let suu = suu_of(sxx, sxu);
            return DMatrix::from_row_slice(2, 2, &[sxx, sxu, sxu, suu]);
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    let offer = |sxx: f64, sxu: f64, best: &mut Option<(f64, f64, f64)>| {
        if !feasible(sxx, sxu) {
            return;
        }
        let d2 = dist2(sxx, sxu);
        if best.map(|(b, _, _)| d2 < b).unwrap_or(true) {
            *best = Some((d2, sxx, sxu));
        }
    };

    // Trace chord: s_xu = 1.75 s_xx - 5 keeps the trace at exactly 4, and the
    // PSD cone cuts it to the interval between the two roots below. All
    // coordinates are affine in s_xx, so the restricted objective is an exact
    // 1-d quadratic: project and clamp.
    {
        // det = 0 on the chord: 4.0625 t^2 - 21.5 t + 25 = 0.
        let disc: f64 = 21.5 * 21.5 - 4.0 * 4.0625 * 25.0;
        if disc > 0.0 {
            let lo = (21.5 - disc.sqrt()) / 8.125;
            let hi = (21.5 + disc.sqrt()) / 8.125;
            // Line point at t: (t, 1.75 t - 5, 4 - t); direction (1, 1.75, -1)
            // has squared weighted norm 8.125.
            let t = ((y11 - 0.0) + 2.0 * 1.75 * (y12 + 5.0) - (y22 - 4.0)) / 8.125;
            let t = t.clamp(lo, hi);
            offer(t, 1.75 * t - 5.0, &mut best);
        }
    }

    // Hyperbola arcs: det = 0 solves to s_xu = -s_xx/2 +- sqrt(s_xx^2 - s_xx)
    // for s_xx >= 1. Each branch is a monotone parameterization of its arc,
    // so the restricted objective is unimodal in s_xx and a shrinking grid
    // pins the minimizer.
    for sign in [1.0f64, -1.0] {
        let arm = |sxx: f64| -0.5 * sxx + sign * (sxx * sxx - sxx).max(0.0).sqrt();
        let mut lo = 1.0f64;
        let mut hi = 4.0f64;
        let mut step = (hi - lo) / 12_000.0;
        let mut center: Option<f64> = None;
        for _ in 0..9 {
            let n = ((hi - lo) / step).round() as i64;
            let mut local: Option<(f64, f64)> = None;
            for i in 0..=n {
                let sxx = lo + i as f64 * step;
                let sxu = arm(sxx);
                if !feasible(sxx, sxu) {
                    continue;
                }
                let d2 = dist2(sxx, sxu);
                if local.map(|(b, _)| d2 < b).unwrap_or(true) {
                    local = Some((d2, sxx));
                }
            }
            let Some((_, at)) = local else { break };
            center = Some(at);
            lo = (at - 2.0 * step).max(1.0);
            hi = (at + 2.0 * step).min(4.0);
            step /= 10.0;
        }
        if let Some(sxx) = center {
            offer(sxx, arm(sxx), &mut best);
        }
    }

    let (_, sxx, sxu) = best.expect("feasible set has boundary candidates");
    let suu = suu_of(sxx, sxu);
    DMatrix::from_row_slice(2, 2, &[sxx, sxu, sxu, suu])
}
