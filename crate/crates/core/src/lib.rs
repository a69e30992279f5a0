//! Distributed online linear-quadratic control.
//!
//! A fleet of identical linear systems receives adversarial quadratic stage
//! costs online. Each agent runs consensus-based projected gradient descent on
//! a steady-state covariance SDP, extracts a linear-Gaussian policy from its
//! iterate every round, and is measured by cumulative regret against a fixed
//! strongly stable linear benchmark.
//!
//! Module map:
//! - [`matlin`]: dense symmetric-matrix kernels (eigen, PSD projection,
//!   svec/smat, least squares, discrete Lyapunov).
//! - [`sdp`]: the covariance feasible set and Dykstra projection onto it.
//! - [`plant`]: linear system simulation with Gaussian process noise.
//! - [`policy`]: policy extraction from covariance iterates and strong
//!   stability certification.
//! - [`network`]: doubly stochastic gossip matrices and mixing diagnostics.
//! - [`dogd`]: the per-round distributed online gradient descent update and
//!   its hyper-parameter schedule.
//! - [`costgen`]: online cost sequences (random, constant, replayed).
//! - [`regret`]: full algorithm/benchmark rollouts and regret traces.
//! - [`harness`]: experiment configs, CSV/JSON outputs, CLI commands.

pub mod costgen;
pub mod dogd;
pub mod exec;
pub mod harness;
pub mod matlin;
pub mod network;
pub mod plant;
pub mod policy;
pub mod regret;
pub mod rng;
pub mod sdp;
