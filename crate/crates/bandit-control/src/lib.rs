//! Bandit control of linear dynamical systems.
//!
//! This crate implements an online controller that learns to steer a partially
//! observed linear dynamical system from bandit feedback alone: at every step
//! the controller picks an action, and the only information it receives back
//! is the scalar cost it incurred. No gradients, no cost matrices, no state.
//!
//! The pieces, bottom to top:
//!
//! - [`lds`]: the plant. State-space simulation, Markov operators, nature's-y
//!   signals, semi-adversarial noise traces, and quadratic step costs.
//! - [`geometry`]: constraint sets with self-concordant barriers, Dikin
//!   ellipsoids, matrix inverse square roots, and sphere sampling.
//! - [`policy`]: disturbance response controllers, linear policies acting on
//!   a window of recent nature's-y values, with flattening to plain vectors.
//! - [`bco`]: bandit convex optimization with memory. An ellipsoidal
//!   one-point gradient estimator drives delayed, barrier-regularized
//!   follow-the-leader updates.
//! - [`sysid`]: least-squares identification of the Markov operator from
//!   Gaussian-excited rollouts, for the unknown-system setting.
//! - [`control`]: the bandit perturbation controller that binds the optimizer
//!   to the plant, for both known and estimated system models.
//! - [`baselines`]: LQR via the discrete algebraic Riccati equation, a
//!   perturbation controller with spherical gradient estimates, and the
//!   hindsight-optimal policy oracle used for regret accounting.
//! - [`harness`]: seeded multi-trial experiment orchestration with CSV
//!   outputs and a JSON configuration schema.
//!
//! Everything is deterministic given seeds: each noise trace and each
//! optimizer owns its own counter-based RNG stream, and the harness fixes
//! reduction order so results are identical across thread counts.

pub mod baselines;
pub mod bco;
pub mod control;
pub mod geometry;
pub mod harness;
pub mod lds;
pub mod policy;
pub mod seeding;
pub mod sysid;

/// Dense dynamically sized matrix of `f64`, the working type throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense dynamically sized column vector of `f64`.
pub type Vector = nalgebra::DVector<f64>;
