//! Comparison controllers and the hindsight policy oracle.
//!
//! Three reference points bracket the learned controller. The infinite
//! horizon LQR gain, solved from the discrete algebraic Riccati equation
//! and applied as noisy state feedback `u = K y`, is the classical optimum
//! for Gaussian noise. A spherical-smoothing bandit perturbation controller
//! with magnitude bounding ("BPC") represents the prior bandit approach.
//! The zero controller is the do-nothing floor.
//!
//! Regret is measured against the best fixed observation-feedback policy
//! in hindsight:
//!
//! ```text
//! J(M) = sum_t c_t(y_t^M, u_t^M)
//! u_t^M = sum_{j=0}^{H-1} M^[j] ynat_{t-j}
//! y_t^M = ynat_t + sum_{i>=1} G^[i] u^M_{t-i}
//! ```
//!
//! Both counterfactual signals are affine in the flattened policy, so `J`
//! is a convex quadratic. [`best_drc_hindsight`] assembles it exactly and
//! runs projected gradient descent over the Frobenius ball to a pinned
//! stationarity tolerance; [`best_drc_hindsight_l1op`] optimizes over the
//! larger l1-operator ball with conditional gradient steps, whose linear
//! subproblem is solved per block by a spectral oracle.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::control::{TrialPhase, TrialResult, TrialStep};
use crate::geometry::sample_unit_sphere;
use crate::lds::{
    simulate_step, CostSpec, LdsError, LdsParams, LdsState, MarkovOperator, NoiseTrace,
    spectral_radius,
};
use crate::policy::{DrcParams, PolicyError};
use crate::{Matrix, Vector};

/// Errors from baseline construction and rollouts.
#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error("DARE diverged")]
    DareDiverged,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Lds(#[from] LdsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// An LQR solution: the feedback gain and the Riccati matrix certifying it.
#[derive(Debug, Clone)]
pub struct LqrGain {
    /// Feedback gain; the controller plays `u = K x`.
    pub k: Matrix,
    /// Symmetric PSD solution of the Riccati fixed point.
    pub p: Matrix,
}

fn check_dare_dims(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(), BaselineError> {
    let d_x = a.nrows();
    let d_u = b.ncols();
    if a.ncols() != d_x {
        return Err(BaselineError::Dimension(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != d_x {
        return Err(BaselineError::Dimension(format!(
            "B has {} rows but A is {d_x}x{d_x}",
            b.nrows()
        )));
    }
    if q.nrows() != d_x || q.ncols() != d_x {
        return Err(BaselineError::Dimension(format!(
            "Q must be {d_x}x{d_x}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if r.nrows() != d_u || r.ncols() != d_u {
        return Err(BaselineError::Dimension(format!(
            "R must be {d_u}x{d_u}, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(())
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// `P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA` from `P = Q`, stopping when
/// the Frobenius change is at most `1e-10`, and returns the stationary `P`
/// together with the gain `K = -(R + B'PB)^{-1} B'PA`.
pub fn dare_solve(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
) -> Result<LqrGain, BaselineError> {
    check_dare_dims(a, b, q, r)?;
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..100_000 {
        let next = riccati_map(a, b, q, r, &p).ok_or(BaselineError::DareDiverged)?;
        let delta = (&next - &p).norm();
        p = next;
        if !p.iter().all(|v| v.is_finite()) || p.norm() > 1e12 {
            return Err(BaselineError::DareDiverged);
        }
        if delta <= 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(BaselineError::DareDiverged);
    }
    let btp = b.transpose() * &p;
    let s = r + &btp * b;
    let chol = s.cholesky().ok_or(BaselineError::DareDiverged)?;
    let k = -chol.solve(&(&btp * a));
    Ok(LqrGain { k, p })
}

// One application of the Riccati operator; None when R + B'PB loses
// positive definiteness, which only happens on divergent iterates.
fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Option<Matrix> {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let chol = s.cholesky()?;
    let m = &btp * a;
    let next = q + a.transpose() * p * a - m.transpose() * chol.solve(&m);
    // Symmetrize to stop round-off from accumulating asymmetry.
    Some((&next + next.transpose()) * 0.5)
}

/// Frobenius norm of the Riccati equation residual at `p`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Some(next) => (next - p).norm(),
        None => f64::INFINITY,
    }
}

/// The LQR feedback law `u = K x`.
pub fn lqr_control(gain: &LqrGain, x: &Vector) -> Vector {
    &gain.k * x
}

fn require_full_observation(system: &LdsParams, who: &str) -> Result<(), BaselineError> {
    let c = system.c();
    if c.nrows() != c.ncols() || (c - Matrix::identity(c.nrows(), c.ncols())).norm() != 0.0 {
        return Err(BaselineError::Config(format!(
            "{who} requires full observation (C = I)"
        )));
    }
    Ok(())
}

// Shared rollout for controllers that map the current observation to a
// control through a fixed function.
fn run_static<F>(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    t_horizon: usize,
    final_policy: DrcParams,
    mut law: F,
) -> Result<TrialResult, BaselineError>
where
    F: FnMut(&Vector) -> Vector,
{
    if trace.len() < t_horizon {
        return Err(BaselineError::Config(format!(
            "trace has {} steps but the run needs {t_horizon}",
            trace.len()
        )));
    }
    let policy_fro = final_policy.fro_norm();
    let mut state = LdsState::zero(system.d_x());
    let mut steps = Vec::with_capacity(t_horizon);
    let mut controls = Vec::with_capacity(t_horizon);
    let mut observations = Vec::with_capacity(t_horizon);
    let mut total = 0.0;
    for t in 1..=t_horizon {
        let y = system.c() * &state.x + trace.e(t);
        let u = law(&y);
        let cost = costs.eval(t, &y, &u);
        total += cost;
        steps.push(TrialStep {
            t,
            cost,
            control_norm: u.norm(),
            policy_fro_norm: policy_fro,
            phase: TrialPhase::Control,
        });
        let (next, _) = simulate_step(&state, system, &u, &trace.w(t), &trace.e(t))?;
        state = next;
        controls.push(u);
        observations.push(y);
    }
    Ok(TrialResult {
        steps,
        total_cost: total,
        final_policy,
        ynat_log: Vec::new(),
        controls,
        observations,
        estimation: None,
        final_state: state,
    })
}

/// Rolls out noisy state feedback `u_t = K y_t`. Requires `C = I`: the gain
/// acts on the measured state.
pub fn run_lqr(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    gain: &LqrGain,
    t_horizon: usize,
) -> Result<TrialResult, BaselineError> {
    require_full_observation(system, "the LQR baseline")?;
    if gain.k.ncols() != system.d_x() || gain.k.nrows() != system.d_u() {
        return Err(BaselineError::Dimension(format!(
            "gain is {}x{} but the system needs {}x{}",
            gain.k.nrows(),
            gain.k.ncols(),
            system.d_u(),
            system.d_x()
        )));
    }
    // Record the gain as a one-block policy acting on the current y.
    let final_policy = DrcParams::new(vec![gain.k.clone()])?;
    run_static(system, trace, costs, t_horizon, final_policy, |y| &gain.k * y)
}

/// Rolls out the zero controller; the plant runs open loop.
pub fn run_zero(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    t_horizon: usize,
) -> Result<TrialResult, BaselineError> {
    let d_u = system.d_u();
    let final_policy = DrcParams::zero(1, d_u, system.d_y());
    run_static(system, trace, costs, t_horizon, final_policy, |_| Vector::zeros(d_u))
}

/// Settings for the spherical-estimator perturbation controller.
#[derive(Debug, Clone)]
pub struct BpcConfig {
    /// Policy memory: number of disturbance-action blocks.
    pub h: usize,
    /// Exploration radius of the sphere perturbation.
    pub delta: f64,
    /// Gradient descent step size.
    pub lr: f64,
    /// Frobenius bound the iterates are clipped to.
    pub r_bound: f64,
    /// Number of control steps.
    pub t_horizon: usize,
    /// Optional pre-stabilization gain: the applied control becomes
    /// `u_t + K y_t`, matching the setup where both bandit controllers are
    /// handed the LQR gain. Off by default.
    pub stabilizer: Option<Matrix>,
}

impl BpcConfig {
    pub fn new(
        h: usize,
        delta: f64,
        lr: f64,
        r_bound: f64,
        t_horizon: usize,
    ) -> Result<Self, BaselineError> {
        let config = Self { h, delta, lr, r_bound, t_horizon, stabilizer: None };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let mut problems = Vec::new();
        if self.h == 0 {
            problems.push("memory h must be at least 1".to_string());
        }
        if !(self.delta > 0.0) {
            problems.push(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.lr > 0.0) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.r_bound > 0.0) {
            problems.push(format!("r_bound must be positive, got {}", self.r_bound));
        }
        if self.t_horizon == 0 {
            problems.push("t_horizon must be at least 1".to_string());
        }
        if let Some(k) = &self.stabilizer {
            if k.nrows() == 0 || k.ncols() == 0 {
                problems.push("stabilizer gain must be nonempty".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(BaselineError::Config(problems.join("; ")))
        }
    }
}

// Delayed spherical gradient estimate: (n/delta) * cost * sum of the last
// h perturbation directions, most recent first.
fn bpc_gradient(n: usize, delta: f64, cost: f64, eps_window: &[Vector]) -> Vector {
    let mut sum = Vector::zeros(eps_window[0].len());
    for eps in eps_window {
        sum += eps;
    }
    sum * (n as f64 / delta * cost)
}

fn clip_fro(v: Vector, r_bound: f64) -> Vector {
    let norm = v.norm();
    if norm <= r_bound {
        v
    } else {
        v * (r_bound / norm)
    }
}

/// Runs the perturbation controller with spherical gradient estimates and
/// magnitude bounding. The policy acts on estimated state perturbations
/// `w_hat_{t-1} = y_t - A y_{t-1} - B u_{t-1}` (full observation required);
/// each step plays `M_t + delta * eps_t` with `eps_t` uniform on the unit
/// sphere of the flattened policy space, then descends the estimate
/// `(n/delta) c_t sum_{i=0}^{H-1} eps_{t-i}` and clips back to the
/// Frobenius ball of radius `r_bound`. With a stabilizer gain configured,
/// `K y_t` is added to the applied control and the recorded cost covers
/// the total.
pub fn run_bpc(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    config: &BpcConfig,
    mut rng: ChaCha8Rng,
) -> Result<TrialResult, BaselineError> {
    config.validate()?;
    require_full_observation(system, "the BPC baseline")?;
    if trace.len() < config.t_horizon {
        return Err(BaselineError::Config(format!(
            "trace has {} steps but the run needs {}",
            trace.len(),
            config.t_horizon
        )));
    }
    let (d_x, d_u) = (system.d_x(), system.d_u());
    if let Some(k) = &config.stabilizer {
        if k.nrows() != d_u || k.ncols() != d_x {
            return Err(BaselineError::Dimension(format!(
                "stabilizer must be {d_u}x{d_x}, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
    }
    let h = config.h;
    let n = h * d_u * d_x;

    let mut m = Vector::zeros(n);
    // Most recent first, zero-padded before time 1.
    let mut eps_window: Vec<Vector> = vec![Vector::zeros(n); h];
    let mut what_window: Vec<Vector> = vec![Vector::zeros(d_x); h];
    let mut prev_y: Option<Vector> = None;
    let mut prev_u = Vector::zeros(d_u);

    let mut state = LdsState::zero(d_x);
    let mut steps = Vec::with_capacity(config.t_horizon);
    let mut controls = Vec::with_capacity(config.t_horizon);
    let mut observations = Vec::with_capacity(config.t_horizon);
    let mut total = 0.0;
    for t in 1..=config.t_horizon {
        let y = system.c() * &state.x + trace.e(t);
        if let Some(py) = prev_y.take() {
            let what = &y - system.a() * py - system.b() * &prev_u;
            what_window.pop();
            what_window.insert(0, what);
        }

        let eps = sample_unit_sphere(n, &mut rng);
        let m_tilde = DrcParams::unflatten(&(&m + &eps * config.delta), h, d_u, d_x)?;
        let mut u = m_tilde.control(&what_window)?;
        if let Some(k) = &config.stabilizer {
            u += k * &y;
        }
        let cost = costs.eval(t, &y, &u);
        total += cost;

        eps_window.pop();
        eps_window.insert(0, eps);
        let g = bpc_gradient(n, config.delta, cost, &eps_window);
        m = clip_fro(m - g * config.lr, config.r_bound);

        steps.push(TrialStep {
            t,
            cost,
            control_norm: u.norm(),
            policy_fro_norm: m.norm(),
            phase: TrialPhase::Control,
        });
        let (next, _) = simulate_step(&state, system, &u, &trace.w(t), &trace.e(t))?;
        state = next;
        prev_y = Some(y.clone());
        prev_u = u.clone();
        controls.push(u);
        observations.push(y);
    }
    Ok(TrialResult {
        steps,
        total_cost: total,
        final_policy: DrcParams::unflatten(&m, h, d_u, d_x)?,
        ynat_log: Vec::new(),
        controls,
        observations,
        estimation: None,
        final_state: state,
    })
}

/// Output of the hindsight policy solvers.
#[derive(Debug, Clone)]
pub struct HindsightReport {
    /// The optimized policy.
    pub policy: DrcParams,
    /// Counterfactual total cost of that policy.
    pub total_cost: f64,
    /// Whether the stationarity tolerance was reached within budget.
    pub converged: bool,
    pub iterations: usize,
    /// Stationarity at the returned point: projected gradient norm for the
    /// projected gradient solver, duality gap for the conditional gradient
    /// solver.
    pub stationarity: f64,
}

// The counterfactual cost as an explicit quadratic J(m) = m'Pm + 2q'm + c0
// over the flattened policy. U_t maps m to u_t; Y_t = sum_i G^[i] U_{t-i}
// maps m to the control-induced part of y_t. With a stabilizer gain K the
// charged control is K y_t + u_t while only u_t recirculates through G,
// so the control map becomes K Y_t + U_t with affine part K ynat_t.
struct QuadraticCost {
    p: Matrix,
    q: Vector,
    c0: f64,
}

impl QuadraticCost {
    fn assemble(
        g: &MarkovOperator,
        ynat: &[Vector],
        costs: &CostSpec,
        h: usize,
        stabilizer: Option<&Matrix>,
    ) -> Result<Self, BaselineError> {
        let (d_y, d_u) = (g.d_y(), g.d_u());
        let n = h * d_u * d_y;
        for (idx, y) in ynat.iter().enumerate() {
            if y.len() != d_y {
                return Err(BaselineError::Dimension(format!(
                    "ynat[{idx}] has dimension {} but G outputs {d_y}",
                    y.len()
                )));
            }
        }
        if let Some(k) = stabilizer {
            if k.nrows() != d_u || k.ncols() != d_y {
                return Err(BaselineError::Dimension(format!(
                    "stabilizer must be {d_u}x{d_y}, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let t_len = ynat.len();
        // u_t = U_t m with U_t[a, j*d_u*d_y + a*d_y + b] = ynat_{t-j}[b].
        let u_maps: Vec<Matrix> = (1..=t_len)
            .map(|t| {
                let mut u_t = Matrix::zeros(d_u, n);
                for j in 0..h {
                    if t <= j {
                        break;
                    }
                    let y = &ynat[t - 1 - j];
                    for a in 0..d_u {
                        for b in 0..d_y {
                            u_t[(a, j * d_u * d_y + a * d_y + b)] = y[b];
                        }
                    }
                }
                u_t
            })
            .collect();
        let mut p = Matrix::zeros(n, n);
        let mut q = Vector::zeros(n);
        let mut c0 = 0.0;
        for t in 1..=t_len {
            let mut y_t = Matrix::zeros(d_y, n);
            for i in 1..g.len() {
                if t <= i {
                    break;
                }
                y_t += g.block(i) * &u_maps[t - 1 - i];
            }
            let q_t = costs.q_at(t);
            let r_t = costs.r_at(t);
            let u_t = &u_maps[t - 1];
            p += y_t.transpose() * q_t * &y_t;
            q += y_t.transpose() * (q_t * &ynat[t - 1]);
            c0 += (ynat[t - 1].transpose() * q_t * &ynat[t - 1])[(0, 0)];
            match stabilizer {
                None => {
                    p += u_t.transpose() * r_t * u_t;
                }
                Some(k) => {
                    let w_t = k * &y_t + u_t;
                    let k_ynat = k * &ynat[t - 1];
                    p += w_t.transpose() * r_t * &w_t;
                    q += w_t.transpose() * (r_t * &k_ynat);
                    c0 += (k_ynat.transpose() * r_t * &k_ynat)[(0, 0)];
                }
            }
        }
        p = (&p + p.transpose()) * 0.5;
        Ok(Self { p, q, c0 })
    }

    fn value(&self, m: &Vector) -> f64 {
        (m.transpose() * &self.p * m)[(0, 0)] + 2.0 * self.q.dot(m) + self.c0
    }

    fn gradient(&self, m: &Vector) -> Vector {
        (&self.p * m + &self.q) * 2.0
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.p.symmetric_eigenvalues().iter().cloned().fold(0.0f64, f64::max)
    }
}

fn project_ball(v: Vector, radius: f64) -> Vector {
    let norm = v.norm();
    if norm <= radius {
        v
    } else {
        v * (radius / norm)
    }
}

/// Exact counterfactual cost of a fixed policy on a recorded nature's-y
/// sequence: replays `u_t = sum_j M^[j] ynat_{t-j}` and
/// `y_t = ynat_t + sum_i G^[i] u_{t-i}` through the truncated operator.
pub fn drc_counterfactual_cost(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    policy: &DrcParams,
) -> Result<f64, BaselineError> {
    drc_counterfactual_cost_with(g, ynat, costs, policy, None)
}

/// [`drc_counterfactual_cost`] on a pre-stabilized loop: the cost is
/// charged on the applied control `K y_t + u_t` while only the policy's
/// own component `u_t` recirculates through the operator, which must
/// describe the stabilized plant.
pub fn drc_counterfactual_cost_with(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    policy: &DrcParams,
    stabilizer: Option<&Matrix>,
) -> Result<f64, BaselineError> {
    let (d_y, d_u) = (g.d_y(), g.d_u());
    if policy.d_u() != d_u || policy.d_y() != d_y {
        return Err(BaselineError::Dimension(format!(
            "policy is {}x{} per block but G needs {d_u}x{d_y}",
            policy.d_u(),
            policy.d_y()
        )));
    }
    if let Some(k) = stabilizer {
        if k.nrows() != d_u || k.ncols() != d_y {
            return Err(BaselineError::Dimension(format!(
                "stabilizer must be {d_u}x{d_y}, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
    }
    let h = policy.h();
    let mut window = vec![Vector::zeros(d_y); h];
    let mut us: Vec<Vector> = Vec::with_capacity(ynat.len());
    let mut total = 0.0;
    for (idx, ynat_t) in ynat.iter().enumerate() {
        let t = idx + 1;
        window.pop();
        window.insert(0, ynat_t.clone());
        let u = policy.control(&window)?;
        let mut y = ynat_t.clone();
        for i in 1..g.len() {
            if idx < i {
                break;
            }
            y += g.block(i) * &us[idx - i];
        }
        let applied = match stabilizer {
            Some(k) => k * &y + &u,
            None => u.clone(),
        };
        total += costs.eval(t, &y, &applied);
        us.push(u);
    }
    Ok(total)
}

/// Finds the best fixed policy in hindsight over the Frobenius ball
/// `|M|_F <= r / sqrt(h)`, by projected gradient descent on the exact
/// quadratic counterfactual cost, run until the projected gradient norm is
/// at most `1e-7`. Returns the best iterate with `converged = false` if the
/// budget runs out first.
pub fn best_drc_hindsight(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    h: usize,
    r: f64,
) -> Result<HindsightReport, BaselineError> {
    best_drc_hindsight_with(g, ynat, costs, h, r, None)
}

/// [`best_drc_hindsight`] on a pre-stabilized loop; see
/// [`drc_counterfactual_cost_with`] for the cost convention.
pub fn best_drc_hindsight_with(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    h: usize,
    r: f64,
    stabilizer: Option<&Matrix>,
) -> Result<HindsightReport, BaselineError> {
    if h == 0 {
        return Err(BaselineError::Config("memory h must be at least 1".into()));
    }
    if !(r > 0.0) {
        return Err(BaselineError::Config(format!("radius must be positive, got {r}")));
    }
    let (d_y, d_u) = (g.d_y(), g.d_u());
    let quad = QuadraticCost::assemble(g, ynat, costs, h, stabilizer)?;
    let radius = r / (h as f64).sqrt();
    let lipschitz = quad.lipschitz();
    let n = h * d_u * d_y;
    if lipschitz <= 0.0 {
        // The cost does not depend on the policy (e.g. zero noise).
        return Ok(HindsightReport {
            policy: DrcParams::zero(h, d_u, d_y),
            total_cost: quad.c0,
            converged: true,
            iterations: 0,
            stationarity: 0.0,
        });
    }
    let step = 1.0 / lipschitz;
    let tol = 1e-7;
    let mut m = Vector::zeros(n);
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;
    let mut converged = false;
    for k in 0..500_000 {
        iterations = k + 1;
        let next = project_ball(&m - quad.gradient(&m) * step, radius);
        stationarity = (&m - &next).norm() / step;
        m = next;
        if stationarity <= tol {
            converged = true;
            break;
        }
    }
    Ok(HindsightReport {
        total_cost: quad.value(&m),
        policy: DrcParams::unflatten(&m, h, d_u, d_y)?,
        converged,
        iterations,
        stationarity,
    })
}

// Linear minimization oracle over the l1-operator ball: concentrate the
// whole budget on the block with the largest nuclear norm of the gradient
// and move against its polar factor.
fn l1_op_lmo(grad: &Vector, h: usize, d_u: usize, d_y: usize, r: f64) -> Vector {
    let mut best: Option<(usize, f64, Matrix)> = None;
    for j in 0..h {
        let block = Matrix::from_fn(d_u, d_y, |a, b| grad[j * d_u * d_y + a * d_y + b]);
        let svd = block.clone().svd(true, true);
        let nuclear: f64 = svd.singular_values.iter().sum();
        if best.as_ref().is_none_or(|(_, n, _)| nuclear > *n) {
            let u = svd.u.as_ref().expect("svd requested u");
            let v_t = svd.v_t.as_ref().expect("svd requested v_t");
            best = Some((j, nuclear, u * v_t));
        }
    }
    let (j, _, polar) = best.expect("at least one block");
    let mut vertex = Vector::zeros(h * d_u * d_y);
    for a in 0..d_u {
        for b in 0..d_y {
            vertex[j * d_u * d_y + a * d_y + b] = -r * polar[(a, b)];
        }
    }
    vertex
}

/// Finds an approximately best fixed policy in hindsight over the full
/// l1-operator ball `sum_j |M^[j]|_op <= r`, by conditional gradient
/// (Frank-Wolfe) with the per-block spectral linear oracle and step
/// `2/(k+2)`. Stops when the duality gap falls below `1e-6 * (1 + |J|)`;
/// reports the best iterate seen.
pub fn best_drc_hindsight_l1op(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    h: usize,
    r: f64,
) -> Result<HindsightReport, BaselineError> {
    best_drc_hindsight_l1op_with(g, ynat, costs, h, r, None)
}

/// [`best_drc_hindsight_l1op`] on a pre-stabilized loop; see
/// [`drc_counterfactual_cost_with`] for the cost convention.
pub fn best_drc_hindsight_l1op_with(
    g: &MarkovOperator,
    ynat: &[Vector],
    costs: &CostSpec,
    h: usize,
    r: f64,
    stabilizer: Option<&Matrix>,
) -> Result<HindsightReport, BaselineError> {
    if h == 0 {
        return Err(BaselineError::Config("memory h must be at least 1".into()));
    }
    if !(r > 0.0) {
        return Err(BaselineError::Config(format!("radius must be positive, got {r}")));
    }
    let (d_y, d_u) = (g.d_y(), g.d_u());
    let quad = QuadraticCost::assemble(g, ynat, costs, h, stabilizer)?;
    let n = h * d_u * d_y;
    let mut m = Vector::zeros(n);
    let mut best_m = m.clone();
    let mut best_value = quad.value(&m);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..50_000 {
        iterations = k + 1;
        let grad = quad.gradient(&m);
        let vertex = l1_op_lmo(&grad, h, d_u, d_y, r);
        gap = grad.dot(&(&m - &vertex));
        let value = quad.value(&m);
        if value < best_value {
            best_value = value;
            best_m = m.clone();
        }
        if gap <= 1e-6 * (1.0 + value.abs()) {
            converged = true;
            break;
        }
        let gamma = 2.0 / (k as f64 + 2.0);
        m = &m * (1.0 - gamma) + vertex * gamma;
    }
    let final_value = quad.value(&m);
    if final_value < best_value {
        best_value = final_value;
        best_m = m;
    }
    Ok(HindsightReport {
        policy: DrcParams::unflatten(&best_m, h, d_u, d_y)?,
        total_cost: best_value,
        converged,
        iterations,
        stationarity: gap,
    })
}

/// Closed-loop stability check for a gain: spectral radius of `A + BK`.
pub fn closed_loop_radius(system: &LdsParams, gain: &LqrGain) -> Result<f64, BaselineError> {
    Ok(spectral_radius(&(system.a() + system.b() * &gain.k))?)
}
