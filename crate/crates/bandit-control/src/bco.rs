//! Bandit convex optimization with memory.
//!
//! The optimizer plays points in a constraint set `K`, observes only a
//! scalar loss that may depend on its last `H` plays, and updates through a
//! barrier-regularized follow-the-leader rule with delayed gradient
//! incorporation. One step of the loop, with `Hbar = H - 1`:
//!
//! ```text
//! play    y_t = x_t + A_t u_t,   A_t = (hess R(x_t) + eta sigma t I)^(-1/2),
//!                                u_t uniform on the unit sphere
//! feed    g_t = n F_t sum_{i=0}^{Hbar} A_{t-i}^(-1) u_{t-i}
//! update  x_{t+1} = argmin_{x in K} sum_{s=H}^{t} [ g_{s-Hbar}' x
//!                     + prox_coeff sigma |x - x_{s-Hbar}|^2 ] + R(x)/eta
//! ```
//!
//! The perturbation `A_t u_t` lies in the Dikin ellipsoid at `x_t` (the
//! preconditioner dominates the barrier Hessian), so every play is feasible.
//! The update consumes gradient estimates with an `Hbar`-step delay;
//! `g_1..g_{Hbar}` are zero initializers, so centers stay at the analytic
//! center through step `2 Hbar` and the center `x_{t+1}` never depends on
//! the sphere draws `u_{t-Hbar+1..t+1}`. For quadratic losses the estimate
//! is conditionally unbiased for the sum of partial gradients of the memory
//! loss at the centers.
//!
//! The same delayed follow-the-leader scheme with exact (full-information)
//! losses, and its linearized strongly-convex surrogate, are provided as
//! [`rftl_d_full_info`] for testing the delay machinery in isolation.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    newton_minimize, psd_sqrt_pair, sample_unit_sphere, ConstraintSet, GeometryError,
    NewtonOptions, PsdSqrtPair,
};
use crate::seeding::rng_from_seed;
use crate::{Matrix, Vector};

/// Errors from optimizer configuration and stepping.
#[derive(Debug, Error)]
pub enum BcoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol violation: expected {expected} next")]
    OutOfOrder { expected: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Loss-regularity constants carried for logging only; nothing is enforced
/// at runtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRegularity {
    /// Bound on loss values.
    pub b: f64,
    /// Bound on loss gradients.
    pub l: f64,
    /// Smoothness (gradient Lipschitz) constant.
    pub beta: f64,
}

/// Optimizer configuration.
#[derive(Debug, Clone)]
pub struct EbcoConfig {
    /// Decision dimension.
    pub n: usize,
    /// Memory length `H >= 1`; losses may depend on the last `H` plays.
    pub h: usize,
    /// Horizon `T >= H`.
    pub t_horizon: usize,
    /// Step size `eta > 0`.
    pub eta: f64,
    /// Strong-convexity parameter `sigma > 0` of the (conditional) losses.
    pub sigma: f64,
    /// Constraint set; its dimension must equal `n`.
    pub set: ConstraintSet,
    /// Inner-solver stopping parameters.
    pub newton: NewtonOptions,
    /// Coefficient on `sigma |x - anchor|^2` in the update; 0.5 recovers the
    /// standard `sigma/2` proximal weight.
    pub prox_coeff: f64,
    /// Optional regularity constants, echoed in diagnostics.
    pub diagnostics: Option<LossRegularity>,
}

impl EbcoConfig {
    /// Standard configuration with default solver settings and the `sigma/2`
    /// proximal weight.
    pub fn new(
        n: usize,
        h: usize,
        t_horizon: usize,
        eta: f64,
        sigma: f64,
        set: ConstraintSet,
    ) -> Result<Self, BcoError> {
        let config = Self {
            n,
            h,
            t_horizon,
            eta,
            sigma,
            set,
            newton: NewtonOptions::default(),
            prox_coeff: 0.5,
            diagnostics: None,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), BcoError> {
        if self.h < 1 {
            return Err(BcoError::Config("memory length H must be at least 1".into()));
        }
        if self.t_horizon < self.h {
            return Err(BcoError::Config(format!(
                "horizon T = {} must be at least H = {}",
                self.t_horizon, self.h
            )));
        }
        if !(self.eta > 0.0) || !(self.sigma > 0.0) {
            return Err(BcoError::Config(format!(
                "eta and sigma must be positive, got eta = {}, sigma = {}",
                self.eta, self.sigma
            )));
        }
        if !(self.prox_coeff >= 0.0) {
            return Err(BcoError::Config("prox_coeff must be nonnegative".into()));
        }
        if self.set.dim() != self.n {
            return Err(BcoError::Config(format!(
                "constraint set has dimension {} but n = {}",
                self.set.dim(),
                self.n
            )));
        }
        Ok(())
    }

    fn hbar(&self) -> usize {
        self.h - 1
    }
}

/// Per-step diagnostics recorded at each completed feedback.
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    pub t: usize,
    pub loss: f64,
    pub g_norm: f64,
    pub step_norm: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    AwaitPlay,
    AwaitFeedback,
}

/// The optimizer's rolling state. Strict play/feedback alternation; cloning
/// snapshots the entire state, RNG stream included.
#[derive(Clone)]
pub struct EbcoState {
    config: EbcoConfig,
    rng: ChaCha8Rng,
    // Step whose play is pending (AwaitPlay) or just played (AwaitFeedback).
    t: usize,
    phase: Phase,
    // x_log[j-1] = center x_j; grows by one per feedback at t >= H.
    x_log: Vec<Vector>,
    // g_log[j-1] = estimate g_j; the first H-1 entries are zero initializers.
    g_log: Vec<Vector>,
    // Preconditioners and sphere draws for steps ring_front..ring_front+H-1.
    a_ring: VecDeque<PsdSqrtPair>,
    u_ring: VecDeque<Vector>,
    ring_front: usize,
    // Folded update objective: sums over consumed pairs j = 1..pair_count of
    // g_j, x_j, and |x_j|^2.
    lin_acc: Vector,
    anchor_sum: Vector,
    anchor_sq: f64,
    pair_count: usize,
    trace: Vec<StepDiag>,
}

impl EbcoState {
    /// Initializes the optimizer: centers `x_1..x_H` at the barrier's
    /// minimizer, preconditioners `A_i = (hess R + eta sigma i I)^(-1/2)`,
    /// sphere draws `u_1..u_H`, and zero gradient placeholders
    /// `g_1..g_{H-1}`.
    pub fn init(config: EbcoConfig, rng: ChaCha8Rng) -> Result<Self, BcoError> {
        config.validate()?;
        let mut rng = rng;
        let center = config.set.analytic_center();
        let hess = config.set.barrier_eval(&center)?.hess;
        let mut a_ring = VecDeque::with_capacity(config.h + 1);
        let mut u_ring = VecDeque::with_capacity(config.h + 1);
        for i in 1..=config.h {
            let m = &hess + Matrix::identity(config.n, config.n) * (config.eta * config.sigma * i as f64);
            a_ring.push_back(psd_sqrt_pair(&m)?);
            u_ring.push_back(sample_unit_sphere(config.n, &mut rng));
        }
        let n = config.n;
        let hbar = config.hbar();
        Ok(Self {
            x_log: vec![center; config.h],
            g_log: vec![Vector::zeros(n); hbar],
            a_ring,
            u_ring,
            ring_front: 1,
            lin_acc: Vector::zeros(n),
            anchor_sum: Vector::zeros(n),
            anchor_sq: 0.0,
            pair_count: 0,
            trace: Vec::new(),
            t: 1,
            phase: Phase::AwaitPlay,
            config,
            rng,
        })
    }

    /// Convenience constructor owning a fresh seeded stream.
    pub fn init_seeded(config: EbcoConfig, seed: u64) -> Result<Self, BcoError> {
        Self::init(config, rng_from_seed(seed))
    }

    pub fn config(&self) -> &EbcoConfig {
        &self.config
    }

    /// Step index of the pending or in-flight play.
    pub fn t(&self) -> usize {
        self.t
    }

    /// All centers computed so far: `x_1..x_{latest}`.
    pub fn centers(&self) -> &[Vector] {
        &self.x_log
    }

    /// All gradient estimates so far, zero initializers included.
    pub fn gradient_log(&self) -> &[Vector] {
        &self.g_log
    }

    /// Per-step diagnostics for completed feedbacks at `t >= H`.
    pub fn trace(&self) -> &[StepDiag] {
        &self.trace
    }

    /// The preconditioner window, oldest step first, together with the
    /// absolute step index of its first entry.
    pub fn precond_window(&self) -> (usize, Vec<&PsdSqrtPair>) {
        (self.ring_front, self.a_ring.iter().collect())
    }

    /// The sphere-draw window, oldest step first, aligned with
    /// [`EbcoState::precond_window`].
    pub fn noise_window(&self) -> (usize, Vec<&Vector>) {
        (self.ring_front, self.u_ring.iter().collect())
    }

    fn ring_index(&self, step: usize) -> usize {
        debug_assert!(step >= self.ring_front && step < self.ring_front + self.a_ring.len());
        step - self.ring_front
    }

    /// Returns the perturbed play `y_t = x_t + A_t u_t`; guaranteed to lie
    /// in the constraint set.
    pub fn play(&mut self) -> Result<Vector, BcoError> {
        if self.phase != Phase::AwaitPlay {
            return Err(BcoError::OutOfOrder { expected: "feedback" });
        }
        let idx = self.ring_index(self.t);
        let y = &self.x_log[self.t - 1] + &self.a_ring[idx].inv_sqrt * &self.u_ring[idx];
        self.phase = Phase::AwaitFeedback;
        Ok(y)
    }

    /// Consumes the scalar loss for the step just played. Before step `H`
    /// there is no complete play window, so the loss is discarded and the
    /// clock advances; from step `H` on, this computes the gradient
    /// estimate, solves for the next center, extends the preconditioner and
    /// sphere windows, and advances.
    pub fn feedback(&mut self, loss_value: f64) -> Result<(), BcoError> {
        if self.phase != Phase::AwaitFeedback {
            return Err(BcoError::OutOfOrder { expected: "play" });
        }
        let t = self.t;
        let h = self.config.h;
        let hbar = self.config.hbar();
        if t >= h {
            // g_t from the current window (steps t-Hbar..t).
            let a_window: Vec<&PsdSqrtPair> = self.a_ring.iter().collect();
            let u_window: Vec<&Vector> = self.u_ring.iter().collect();
            let g_t = grad_estimate_refs(loss_value, &a_window, &u_window, self.config.n);
            let g_norm = g_t.norm();
            self.g_log.push(g_t);
            // Fold in the delayed pair j = t - Hbar.
            let j = t - hbar;
            self.lin_acc += &self.g_log[j - 1];
            self.anchor_sum += &self.x_log[j - 1];
            self.anchor_sq += self.x_log[j - 1].norm_squared();
            self.pair_count += 1;
            // Next center.
            let warm = self.x_log[t - 1].clone();
            let (x_next, iters) = solve_center(
                &self.lin_acc,
                &self.anchor_sum,
                self.anchor_sq,
                self.pair_count,
                &self.config,
                &warm,
            )?;
            let step_norm = (&x_next - &warm).norm();
            // Preconditioner and sphere draw for step t+1.
            let hess = self.config.set.barrier_eval(&x_next)?.hess;
            let m = hess
                + Matrix::identity(self.config.n, self.config.n)
                    * (self.config.eta * self.config.sigma * (t + 1) as f64);
            self.a_ring.push_back(psd_sqrt_pair(&m)?);
            self.u_ring.push_back(sample_unit_sphere(self.config.n, &mut self.rng));
            if self.a_ring.len() > h {
                self.a_ring.pop_front();
                self.u_ring.pop_front();
                self.ring_front += 1;
            }
            self.x_log.push(x_next);
            self.trace.push(StepDiag { t, loss: loss_value, g_norm, step_norm, newton_iters: iters });
        }
        self.t = t + 1;
        self.phase = Phase::AwaitPlay;
        Ok(())
    }

    /// Redraws every sphere direction in the in-flight window (the steps
    /// whose gradient estimates are not yet folded into the update). The
    /// upcoming plays and estimates change, but every center the update can
    /// already determine does not: after a redraw at step `t`, centers
    /// through `x_{t + H - 1}` still come out bitwise identical, because
    /// each folds only estimates computed before the redraw. Exposed to
    /// make that delayed dependence observable from outside.
    pub fn redraw_window_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for u in self.u_ring.iter_mut() {
            *u = sample_unit_sphere(self.config.n, rng);
        }
    }

    /// Writes the per-step diagnostic log as CSV.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), std::io::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "loss", "g_norm", "step_norm", "newton_iters"])?;
        for d in &self.trace {
            wtr.write_record([
                d.t.to_string(),
                format!("{}", d.loss),
                format!("{}", d.g_norm),
                format!("{}", d.step_norm),
                d.newton_iters.to_string(),
            ])?;
        }
        wtr.flush()
    }

    #[cfg(test)]
    fn override_current_noise(&mut self, u: Vector) {
        let idx = self.ring_index(self.t);
        self.u_ring[idx] = u;
    }
}

fn grad_estimate_refs(
    loss_value: f64,
    a_window: &[&PsdSqrtPair],
    u_window: &[&Vector],
    n: usize,
) -> Vector {
    let mut sum = Vector::zeros(n);
    for (pair, u) in a_window.iter().zip(u_window) {
        // A^(-1) is the stored square root; no re-inversion.
        sum += &pair.sqrt * *u;
    }
    sum * (n as f64 * loss_value)
}

/// The spherical gradient estimate
/// `g_t = n * loss * sum_{i=0}^{H-1} A_{t-i}^(-1) u_{t-i}`, with the windows
/// supplied oldest step first. `A^(-1)` comes from the cached
/// eigendecomposition held in each [`PsdSqrtPair`].
pub fn grad_estimate(
    loss_value: f64,
    a_window: &[PsdSqrtPair],
    u_window: &[Vector],
    n: usize,
    h: usize,
) -> Result<Vector, BcoError> {
    if a_window.len() != h || u_window.len() != h {
        return Err(BcoError::Dimension(format!(
            "windows must hold exactly H = {} entries, got {} and {}",
            h,
            a_window.len(),
            u_window.len()
        )));
    }
    if u_window.iter().any(|u| u.len() != n) {
        return Err(BcoError::Dimension("sphere draw dimension differs from n".into()));
    }
    let a_refs: Vec<&PsdSqrtPair> = a_window.iter().collect();
    let u_refs: Vec<&Vector> = u_window.iter().collect();
    Ok(grad_estimate_refs(loss_value, &a_refs, &u_refs, n))
}

fn solve_center(
    lin_acc: &Vector,
    anchor_sum: &Vector,
    anchor_sq: f64,
    pair_count: usize,
    config: &EbcoConfig,
    warm_start: &Vector,
) -> Result<(Vector, usize), BcoError> {
    let eta = config.eta;
    let c = config.prox_coeff * config.sigma;
    let m = pair_count as f64;
    let set = &config.set;
    let n = config.n;
    let objective = (
        move |x: &Vector| {
            let quad = lin_acc.dot(x)
                + c * (m * x.norm_squared() - 2.0 * x.dot(anchor_sum) + anchor_sq);
            eta * quad + set.barrier_eval(x).expect("Newton iterates stay interior").value
        },
        move |x: &Vector| {
            let eval = set.barrier_eval(x).expect("Newton iterates stay interior");
            let grad = (lin_acc + (x * m - anchor_sum) * (2.0 * c)) * eta + eval.grad;
            let hess = eval.hess + Matrix::identity(n, n) * (2.0 * eta * c * m);
            (grad, hess)
        },
    );
    let out = newton_minimize(&objective, set, warm_start, &config.newton)?;
    Ok((out.x, out.iters))
}

/// Solves the delayed follow-the-leader update
/// `argmin_x eta * sum_j [ g_j' x + prox_coeff sigma |x - anchor_j|^2 ] + R(x)`
/// over the supplied gradient/anchor pairs. The incremental path inside
/// [`EbcoState::feedback`] produces bitwise-identical results when given the
/// same pairs in the same order.
pub fn rftl_d_update(
    g_log: &[Vector],
    x_anchor_log: &[Vector],
    config: &EbcoConfig,
    warm_start: &Vector,
) -> Result<Vector, BcoError> {
    if g_log.is_empty() || g_log.len() != x_anchor_log.len() {
        return Err(BcoError::Dimension(format!(
            "need matching nonempty logs, got {} gradients and {} anchors",
            g_log.len(),
            x_anchor_log.len()
        )));
    }
    let mut lin_acc = Vector::zeros(config.n);
    let mut anchor_sum = Vector::zeros(config.n);
    let mut anchor_sq = 0.0;
    for (g, a) in g_log.iter().zip(x_anchor_log) {
        lin_acc += g;
        anchor_sum += a;
        anchor_sq += a.norm_squared();
    }
    Ok(solve_center(&lin_acc, &anchor_sum, anchor_sq, g_log.len(), config, warm_start)?.0)
}

/// A convex loss with exact oracles, as consumed by [`rftl_d_full_info`].
pub trait ConvexLoss {
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    fn hess(&self, x: &Vector) -> Matrix;
}

/// Quadratic loss `x' P x + q' x + r` with symmetric PSD `P`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub p: Matrix,
    pub q: Vector,
    pub r: f64,
}

impl ConvexLoss for QuadraticLoss {
    fn value(&self, x: &Vector) -> f64 {
        (x.transpose() * &self.p * x)[(0, 0)] + self.q.dot(x) + self.r
    }

    fn grad(&self, x: &Vector) -> Vector {
        (&self.p + self.p.transpose()) * x + &self.q
    }

    fn hess(&self, _x: &Vector) -> Matrix {
        &self.p + self.p.transpose()
    }
}

/// Update rule for the full-information delayed follow-the-leader loop.
#[derive(Debug, Clone, Copy)]
pub enum RftlDMode {
    /// Minimize the sum of exact delayed losses plus the barrier.
    Exact,
    /// Minimize linearized losses anchored at their own play, plus
    /// `prox_coeff * sigma |x - anchor|^2` proximal terms: the
    /// strongly-convex surrogate.
    ProxLinearized { sigma: f64, prox_coeff: f64 },
}

/// Full-information delayed follow-the-leader over losses `l_1..l_L` with
/// memory length `h`: plays `x_1..x_H` at the analytic center, then
/// `x_{t+1} = argmin_x sum_{s=H}^{t} l_{s-Hbar}(x) + R(x)/eta` (exact mode)
/// for `t = H..T-1`, `T = L + H - 1`. Returns all `T` plays.
pub fn rftl_d_full_info<L: ConvexLoss>(
    losses: &[L],
    set: &ConstraintSet,
    eta: f64,
    h: usize,
    mode: RftlDMode,
    opts: &NewtonOptions,
) -> Result<Vec<Vector>, BcoError> {
    if h < 1 {
        return Err(BcoError::Config("memory length H must be at least 1".into()));
    }
    if !(eta > 0.0) {
        return Err(BcoError::Config("eta must be positive".into()));
    }
    if losses.is_empty() {
        return Err(BcoError::Config("need at least one loss".into()));
    }
    let n = set.dim();
    let t_total = losses.len() + h - 1;
    let mut plays = vec![set.analytic_center(); h.min(t_total)];
    // Folded state for the prox-linearized mode.
    let mut lin_acc = Vector::zeros(n);
    let mut anchor_sum = Vector::zeros(n);
    let mut anchor_sq = 0.0;
    for t in h..t_total {
        let m = t - (h - 1); // delayed losses l_1..l_m are active
        let warm = plays[t - 1].clone();
        let x_next = match mode {
            RftlDMode::Exact => {
                let active = &losses[..m];
                let objective = (
                    move |x: &Vector| {
                        eta * active.iter().map(|l| l.value(x)).sum::<f64>()
                            + set.barrier_eval(x).expect("interior").value
                    },
                    move |x: &Vector| {
                        let eval = set.barrier_eval(x).expect("interior");
                        let mut grad = eval.grad;
                        let mut hess = eval.hess;
                        for l in active {
                            grad += l.grad(x) * eta;
                            hess += l.hess(x) * eta;
                        }
                        (grad, hess)
                    },
                );
                newton_minimize(&objective, set, &warm, opts)?.x
            }
            RftlDMode::ProxLinearized { sigma, prox_coeff } => {
                // Newly active loss l_m, linearized at its own play x_m.
                let anchor = plays[m - 1].clone();
                lin_acc += losses[m - 1].grad(&anchor);
                anchor_sum += &anchor;
                anchor_sq += anchor.norm_squared();
                let c = prox_coeff * sigma;
                let mf = m as f64;
                let (lin, asum) = (&lin_acc, &anchor_sum);
                let a2 = anchor_sq;
                let objective = (
                    move |x: &Vector| {
                        let quad = lin.dot(x)
                            + c * (mf * x.norm_squared() - 2.0 * x.dot(asum) + a2);
                        eta * quad + set.barrier_eval(x).expect("interior").value
                    },
                    move |x: &Vector| {
                        let eval = set.barrier_eval(x).expect("interior");
                        let grad = (lin + (x * mf - asum) * (2.0 * c)) * eta + eval.grad;
                        let hess = eval.hess + Matrix::identity(n, n) * (2.0 * eta * c * mf);
                        (grad, hess)
                    },
                );
                newton_minimize(&objective, set, &warm, opts)?.x
            }
        };
        plays.push(x_next);
    }
    Ok(plays)
}
