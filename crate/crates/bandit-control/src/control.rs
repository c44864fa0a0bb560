//! Bandit controller over disturbance-response policies.
//!
//! The control loop binds the memory-aware bandit optimizer to the plant:
//! the decision variable is the flattened policy array `M`, the played
//! point is perturbed inside the policy ball, and the only feedback is the
//! scalar step cost. One control step, with `Hbar = H - 1`:
//!
//! ```text
//! observe  y_t,  recover  ynat_t = y_t - sum_{i>=1} G^[i] u_{t-i}
//! play     u_t = sum_{j=0}^{Hbar} Mtilde_t^[j] ynat_{t-j}    (zero for t <= Hbar)
//! incur    c_t(y_t, u_t)  as an opaque scalar
//! update   the optimizer consumes c_t; its gradient estimate carries the
//!          factor n = H d_u d_y of the flattened policy space
//! ```
//!
//! Policies live in the Frobenius ball of radius `R/sqrt(H)`, which embeds
//! in the radius-`R` l1-operator ball, so every played policy is feasible.
//! Nature's-y recovery keeps a ring of the most recent controls; with the
//! operator truncated to `H_G` blocks only the last `H_G - 1` controls
//! contribute, so each step costs `O(H_G)` instead of `O(t)`.
//!
//! When the operator is unknown, [`run_ebpc_unknown`] first spends
//! `N = ceil(sqrt(T))` steps exciting the plant with Gaussian controls to
//! fit the operator by least squares, then runs the same loop on the
//! estimate with the memory length tripled and the policy radius doubled.
//! Estimation-phase costs count toward the total.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bco::{BcoError, EbcoConfig, EbcoState};
use crate::geometry::{ConstraintSet, GeometryError, NewtonOptions};
use crate::lds::{
    op_norm, recover_natures_y, simulate_step, CostSpec, LdsError, LdsParams, LdsState,
    MarkovOperator, NoiseTrace,
};
use crate::policy::{DrcParams, PolicyError};
use crate::sysid::{run_estimation_phase, EstimationReport, SysidError};
use crate::{Matrix, Vector};

/// Errors from controller configuration and stepping.
#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol violation: expected {expected} next")]
    OutOfOrder { expected: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Bco(#[from] BcoError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lds(#[from] LdsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
}

/// Whether the controller runs on the true Markov operator or on a
/// least-squares estimate; a label carried into diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKnowledge {
    Known,
    Unknown,
}

/// Default strong-convexity parameter when the system is known:
/// `sigma_c (sigma_e^2 + sigma_w sigma_min(C) / (1 + |A|_op^2))`.
pub fn sigma_default_known(
    system: &LdsParams,
    sigma_c: f64,
    sigma_e: f64,
    sigma_w: f64,
) -> f64 {
    let svd = system.c().clone().svd(false, false);
    let sigma_min_c = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_op = op_norm(system.a());
    sigma_c * (sigma_e * sigma_e + sigma_w * sigma_min_c / (1.0 + a_op * a_op))
}

/// Default strong-convexity parameter when the operator is estimated:
/// `sigma_c sigma_e^2 / 8`.
pub fn sigma_default_unknown(sigma_c: f64, sigma_e: f64) -> f64 {
    sigma_c * sigma_e * sigma_e / 8.0
}

/// Default step size `c_eta / (d_u d_y L_c H^3 sqrt(T))`; `c_eta` is the
/// sweepable multiplier.
pub fn eta_default(d_u: usize, d_y: usize, l_c: f64, h: usize, t: usize, c_eta: f64) -> f64 {
    let h = h as f64;
    c_eta / ((d_u * d_y) as f64 * l_c * h * h * h * (t as f64).sqrt())
}

/// The plant the controller effectively faces when a pre-stabilizing gain
/// `K` closes the measurement loop: `x' = (A + BKC) x + B u + (w + BKe)`.
/// Use the Markov operator of this system in [`EbpcConfig::g`] whenever
/// [`EbpcConfig::stabilizer`] is set.
pub fn stabilized_params(system: &LdsParams, k: &Matrix) -> Result<LdsParams, ControlError> {
    if k.nrows() != system.d_u() || k.ncols() != system.d_y() {
        return Err(ControlError::Dimension(format!(
            "gain must be {}x{}, got {}x{}",
            system.d_u(),
            system.d_y(),
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(LdsParams::new(
        system.a() + system.b() * k * system.c(),
        system.b().clone(),
        system.c().clone(),
    )?)
}

/// Nature's y of the pre-stabilized loop: the observations the plant would
/// emit under pure gain feedback `u_t = K y_t`. Because the gain acts on
/// the noisy observation, the effective state disturbance is `w_t + BKe_t`,
/// not `w_t` alone; this is the sequence the stabilized controller's
/// recovery converges to, and the input a hindsight oracle over the
/// stabilized loop needs.
pub fn stabilized_natures_y(
    system: &LdsParams,
    k: &Matrix,
    trace: &NoiseTrace,
) -> Result<Vec<Vector>, ControlError> {
    let closed = stabilized_params(system, k)?;
    let mut x = Vector::zeros(system.d_x());
    let mut out = Vec::with_capacity(trace.len());
    for t in 1..=trace.len() {
        let e_t = trace.e(t);
        out.push(system.c() * &x + &e_t);
        x = closed.a() * &x + &trace.w(t) + system.b() * (k * &e_t);
    }
    Ok(out)
}

/// Controller configuration. The policy set is the Frobenius ball of
/// radius `r / sqrt(h)` over the flattened policy space of dimension
/// `n = h * d_u * d_y`.
#[derive(Debug, Clone)]
pub struct EbpcConfig {
    /// Policy memory length `H >= 1`; also the operator truncation used for
    /// nature's-y recovery.
    pub h: usize,
    /// l1-operator-norm radius `R` of the policy class.
    pub r: f64,
    /// Number of control steps to run.
    pub t_horizon: usize,
    /// Markov operator the controller believes in (true or estimated).
    pub g: MarkovOperator,
    /// Optimizer step size.
    pub eta: f64,
    /// Optimizer strong-convexity parameter.
    pub sigma: f64,
    /// Label: true operator or least-squares estimate.
    pub mode: SystemKnowledge,
    /// Optional pre-stabilization gain `K`: the applied control becomes
    /// `u_t + K y_t`, so the controller faces the `A + BKC` plant and the
    /// supplied `g` must describe that stabilized system (see
    /// [`stabilized_params`]). Off by default.
    pub stabilizer: Option<Matrix>,
    /// Inner-solver stopping parameters.
    pub newton: NewtonOptions,
    /// Proximal weight forwarded to the optimizer.
    pub prox_coeff: f64,
}

impl EbpcConfig {
    /// Known-operator configuration with default solver settings.
    pub fn new(
        h: usize,
        r: f64,
        t_horizon: usize,
        g: MarkovOperator,
        eta: f64,
        sigma: f64,
    ) -> Result<Self, ControlError> {
        let config = Self {
            h,
            r,
            t_horizon,
            g,
            eta,
            sigma,
            mode: SystemKnowledge::Known,
            stabilizer: None,
            // The follow-the-leader objective's gradient grows with the sum
            // of gradient estimates, so an absolute 1e-9 target can sit
            // below the float cancellation floor once hundreds of terms of
            // magnitude 1e2..1e4 are accumulated. With the barrier Hessian
            // bounded below by roughly 1/radius^2, a 1e-7 gradient norm
            // moves the policy by under 1e-9, far below any behavioral
            // resolution.
            newton: NewtonOptions { grad_tol: 1e-7, max_iters: 1000 },
            prox_coeff: 0.5,
        };
        config.validate()?;
        Ok(config)
    }

    /// Flattened policy dimension `H * d_u * d_y`.
    pub fn n(&self) -> usize {
        self.h * self.g.d_u() * self.g.d_y()
    }

    pub fn d_u(&self) -> usize {
        self.g.d_u()
    }

    pub fn d_y(&self) -> usize {
        self.g.d_y()
    }

    /// The feasible set over flattened policies: Frobenius ball of radius
    /// `r / sqrt(h)`, which embeds in the radius-`r` l1-operator ball.
    pub fn policy_set(&self) -> ConstraintSet {
        ConstraintSet::ball(Vector::zeros(self.n()), self.r / (self.h as f64).sqrt())
            .expect("positive radius")
    }

    fn validate(&self) -> Result<(), ControlError> {
        let mut violations = Vec::new();
        if self.h < 1 {
            violations.push("memory length H must be at least 1".to_string());
        }
        if !(self.r > 0.0) {
            violations.push(format!("policy radius R must be positive, got {}", self.r));
        }
        if self.t_horizon < self.h {
            violations.push(format!(
                "horizon T = {} must be at least H = {}",
                self.t_horizon, self.h
            ));
        }
        if !(self.eta > 0.0) || !(self.sigma > 0.0) {
            violations.push(format!(
                "eta and sigma must be positive, got eta = {}, sigma = {}",
                self.eta, self.sigma
            ));
        }
        if !(self.prox_coeff >= 0.0) {
            violations.push("prox_coeff must be nonnegative".to_string());
        }
        if self.g.is_empty() {
            violations.push("Markov operator must have at least one block".to_string());
        }
        if let Some(k) = &self.stabilizer {
            if k.nrows() != self.g.d_u() || k.ncols() != self.g.d_y() {
                violations.push(format!(
                    "stabilizer must be {}x{}, got {}x{}",
                    self.g.d_u(),
                    self.g.d_y(),
                    k.nrows(),
                    k.ncols()
                ));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ControlError::Config(violations.join("; ")))
        }
    }

    fn ebco_config(&self) -> Result<EbcoConfig, ControlError> {
        let mut config = EbcoConfig::new(
            self.n(),
            self.h,
            self.t_horizon,
            self.eta,
            self.sigma,
            self.policy_set(),
        )?;
        config.newton = self.newton;
        config.prox_coeff = self.prox_coeff;
        Ok(config)
    }
}

/// The controller's rolling state: the optimizer over flattened policies
/// plus the signal rings for recovery and control synthesis. Strict
/// observe/cost alternation.
pub struct EbpcState {
    bco: EbcoState,
    g: MarkovOperator,
    h: usize,
    d_u: usize,
    d_y: usize,
    // Recovered nature's y, most recent first, zero-padded before time 1;
    // always exactly h entries.
    recent_ynat: Vec<Vector>,
    // The controller's own recent outputs, most recent first; recovery
    // reads blocks 1..g.len()-1 against these.
    recent_controls: Vec<Vector>,
    ynat_log: Vec<Vector>,
    control_log: Vec<Vector>,
    last_policy: Option<DrcParams>,
    t: usize,
    awaiting_cost: bool,
}

impl EbpcState {
    /// Builds the controller. `prior_controls` (most recent first) seed the
    /// recovery ring so a run can resume mid-trajectory; missing history is
    /// zero-padded.
    pub fn new(
        config: &EbpcConfig,
        rng: ChaCha8Rng,
        prior_controls: &[Vector],
    ) -> Result<Self, ControlError> {
        config.validate()?;
        let (d_u, d_y) = (config.d_u(), config.d_y());
        let ring_len = config.g.len().saturating_sub(1);
        let mut recent_controls = vec![Vector::zeros(d_u); ring_len];
        for (slot, u) in recent_controls.iter_mut().zip(prior_controls) {
            if u.len() != d_u {
                return Err(ControlError::Dimension(format!(
                    "prior control has dimension {}, expected {}",
                    u.len(),
                    d_u
                )));
            }
            *slot = u.clone();
        }
        Ok(Self {
            bco: EbcoState::init(config.ebco_config()?, rng)?,
            g: config.g.clone(),
            h: config.h,
            d_u,
            d_y,
            recent_ynat: vec![Vector::zeros(d_y); config.h],
            recent_controls,
            ynat_log: Vec::new(),
            control_log: Vec::new(),
            last_policy: None,
            t: 1,
            awaiting_cost: false,
        })
    }

    /// 1-based index of the pending or in-flight step.
    pub fn t(&self) -> usize {
        self.t
    }

    /// All recovered nature's-y values so far.
    pub fn ynat_log(&self) -> &[Vector] {
        &self.ynat_log
    }

    /// All controls returned so far.
    pub fn control_log(&self) -> &[Vector] {
        &self.control_log
    }

    /// The most recently played policy.
    pub fn last_policy(&self) -> Option<&DrcParams> {
        self.last_policy.as_ref()
    }

    /// The underlying optimizer, exposed for diagnostics.
    pub fn optimizer(&self) -> &EbcoState {
        &self.bco
    }

    /// Consumes the observation for the current step and returns the
    /// control to apply: recovers nature's y, draws the perturbed policy,
    /// and synthesizes the control (zero during the first `H - 1` steps).
    pub fn step(&mut self, y_t: &Vector) -> Result<Vector, ControlError> {
        if self.awaiting_cost {
            return Err(ControlError::OutOfOrder { expected: "cost feedback" });
        }
        if y_t.len() != self.d_y {
            return Err(ControlError::Dimension(format!(
                "observation has dimension {}, expected {}",
                y_t.len(),
                self.d_y
            )));
        }
        let ynat = recover_natures_y(y_t, &self.recent_controls, &self.g);
        self.recent_ynat.insert(0, ynat.clone());
        self.recent_ynat.truncate(self.h);
        self.ynat_log.push(ynat);
        let policy = DrcParams::unflatten(&self.bco.play()?, self.h, self.d_u, self.d_y)?;
        let u = if self.t < self.h {
            Vector::zeros(self.d_u)
        } else {
            policy.control(&self.recent_ynat)?
        };
        self.last_policy = Some(policy);
        if !self.recent_controls.is_empty() {
            self.recent_controls.insert(0, u.clone());
            self.recent_controls.truncate(self.g.len() - 1);
        }
        self.control_log.push(u.clone());
        self.awaiting_cost = true;
        Ok(u)
    }

    /// Consumes the scalar cost incurred by the step just played and runs
    /// the optimizer update.
    pub fn feedback(&mut self, cost: f64) -> Result<(), ControlError> {
        if !self.awaiting_cost {
            return Err(ControlError::OutOfOrder { expected: "observation" });
        }
        self.bco.feedback(cost)?;
        self.t += 1;
        self.awaiting_cost = false;
        Ok(())
    }
}

/// Which stage of a trial produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialPhase {
    /// Gaussian-excitation steps fitting the operator.
    Estimation,
    /// Closed-loop control steps.
    Control,
}

impl TrialPhase {
    pub fn label(&self) -> &'static str {
        match self {
            TrialPhase::Estimation => "est",
            TrialPhase::Control => "ctrl",
        }
    }
}

/// One step of a trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialStep {
    /// 1-based global step index.
    pub t: usize,
    /// Incurred cost `c_t(y_t, u_t)`.
    pub cost: f64,
    /// Euclidean norm of the applied control.
    pub control_norm: f64,
    /// Frobenius norm of the played policy (zero during estimation).
    pub policy_fro_norm: f64,
    pub phase: TrialPhase,
}

/// Everything a closed-loop run produces.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub steps: Vec<TrialStep>,
    pub total_cost: f64,
    /// The last policy played.
    pub final_policy: DrcParams,
    /// Nature's y as recovered online (control phase only).
    pub ynat_log: Vec<Vector>,
    /// Applied controls, estimation phase included.
    pub controls: Vec<Vector>,
    /// Observations, estimation phase included.
    pub observations: Vec<Vector>,
    /// Present when the run included an estimation phase.
    pub estimation: Option<EstimationReport>,
    pub final_state: LdsState,
}

impl TrialResult {
    /// Per-step costs in time order.
    pub fn costs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cost).collect()
    }

    /// Writes the per-step log as CSV with columns
    /// `t,cost,control_norm,policy_fro_norm,phase`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), std::io::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "cost", "control_norm", "policy_fro_norm", "phase"])?;
        for s in &self.steps {
            wtr.write_record([
                s.t.to_string(),
                format!("{}", s.cost),
                format!("{}", s.control_norm),
                format!("{}", s.policy_fro_norm),
                s.phase.label().to_string(),
            ])?;
        }
        wtr.flush()
    }
}

/// Resume point for [`run_ebpc`]: the plant state, the controls already
/// applied (most recent first, seeding the recovery ring), and the number
/// of steps already consumed from the trace.
#[derive(Debug, Clone)]
pub struct RunStart {
    pub state: LdsState,
    pub prior_controls: Vec<Vector>,
    pub t_offset: usize,
}

/// Runs the closed loop for `config.t_horizon` steps against the simulated
/// plant. The controller sees only observations and scalar costs; the cost
/// matrices never cross the interface. Deterministic given the trace and
/// the optimizer stream.
pub fn run_ebpc(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    config: &EbpcConfig,
    rng: ChaCha8Rng,
    start: Option<RunStart>,
) -> Result<TrialResult, ControlError> {
    if config.g.d_u() != system.d_u() || config.g.d_y() != system.d_y() {
        return Err(ControlError::Dimension(format!(
            "operator is {}x{} per block but the system is {}x{}",
            config.g.d_y(),
            config.g.d_u(),
            system.d_y(),
            system.d_u()
        )));
    }
    let (mut state, prior, offset) = match start {
        Some(s) => (s.state, s.prior_controls, s.t_offset),
        None => (LdsState::zero(system.d_x()), Vec::new(), 0),
    };
    if state.x.len() != system.d_x() {
        return Err(ControlError::Dimension(format!(
            "start state has dimension {}, expected {}",
            state.x.len(),
            system.d_x()
        )));
    }
    if offset + config.t_horizon > trace.len() {
        return Err(ControlError::Config(format!(
            "trace holds {} steps but the run needs {}",
            trace.len(),
            offset + config.t_horizon
        )));
    }
    let mut ctrl = EbpcState::new(config, rng, &prior)?;
    let mut steps = Vec::with_capacity(config.t_horizon);
    let mut controls = Vec::with_capacity(config.t_horizon);
    let mut observations = Vec::with_capacity(config.t_horizon);
    let mut total_cost = 0.0;
    for k in 1..=config.t_horizon {
        let t = offset + k;
        let y_t = system.c() * &state.x + trace.e(t);
        let u = ctrl.step(&y_t)?;
        let applied = match &config.stabilizer {
            Some(gain) => &u + gain * &y_t,
            None => u,
        };
        let cost = costs.eval(t, &y_t, &applied);
        ctrl.feedback(cost)?;
        let (next, _) = simulate_step(&state, system, &applied, &trace.w(t), &trace.e(t))?;
        state = next;
        total_cost += cost;
        steps.push(TrialStep {
            t,
            cost,
            control_norm: applied.norm(),
            policy_fro_norm: ctrl.last_policy().map_or(0.0, DrcParams::fro_norm),
            phase: TrialPhase::Control,
        });
        controls.push(applied);
        observations.push(y_t);
    }
    let EbpcState { ynat_log, last_policy, .. } = ctrl;
    Ok(TrialResult {
        steps,
        total_cost,
        final_policy: last_policy
            .unwrap_or_else(|| DrcParams::zero(config.h, config.d_u(), config.d_y())),
        ynat_log,
        controls,
        observations,
        estimation: None,
        final_state: state,
    })
}

/// Unknown-operator pipeline parameters. The control phase triples the
/// memory length and doubles the policy radius relative to the base
/// values.
#[derive(Debug, Clone, Copy)]
pub struct UnknownModeSpec {
    pub base_h: usize,
    pub base_r: f64,
    /// Total steps across both phases.
    pub t_horizon: usize,
    /// Optimizer step size for the control phase.
    pub eta: f64,
    /// Optimizer strong-convexity parameter, typically
    /// [`sigma_default_unknown`].
    pub sigma: f64,
}

/// Two-phase pipeline for an unknown operator: `N = ceil(sqrt(T))`
/// Gaussian-excitation steps fit the operator by least squares, then the
/// closed loop runs on the estimate with `H = 3 base_h`, `R = 2 base_r`.
/// Costs from both phases count toward the total.
pub fn run_ebpc_unknown(
    system: &LdsParams,
    trace: &NoiseTrace,
    costs: &CostSpec,
    spec: &UnknownModeSpec,
    mut rng: ChaCha8Rng,
) -> Result<TrialResult, ControlError> {
    if spec.t_horizon < 4 {
        return Err(ControlError::Config(format!(
            "horizon must be at least 4, got {}",
            spec.t_horizon
        )));
    }
    let n_est = (spec.t_horizon as f64).sqrt().ceil() as usize;
    let h = 3 * spec.base_h;
    let r = 2.0 * spec.base_r;
    if n_est < h {
        return Err(ControlError::Config(format!(
            "estimation phase of {n_est} steps cannot fit {h} operator blocks; \
             raise the horizon or lower the base memory length"
        )));
    }
    if spec.t_horizon - n_est < h {
        return Err(ControlError::Config(format!(
            "control phase of {} steps is shorter than the memory length {h}",
            spec.t_horizon - n_est
        )));
    }
    let phase1 = run_estimation_phase(system, trace, n_est, h, &mut rng)?;
    let mut steps = Vec::with_capacity(spec.t_horizon);
    let mut total_cost = 0.0;
    for t in 1..=n_est {
        let cost = costs.eval(t, &phase1.observations[t - 1], &phase1.controls[t - 1]);
        total_cost += cost;
        steps.push(TrialStep {
            t,
            cost,
            control_norm: phase1.controls[t - 1].norm(),
            policy_fro_norm: 0.0,
            phase: TrialPhase::Estimation,
        });
    }
    let mut config = EbpcConfig::new(
        h,
        r,
        spec.t_horizon - n_est,
        phase1.report.g_hat.clone(),
        spec.eta,
        spec.sigma,
    )?;
    config.mode = SystemKnowledge::Unknown;
    let prior: Vec<Vector> =
        phase1.controls.iter().rev().take(h.saturating_sub(1)).cloned().collect();
    let start = RunStart {
        state: phase1.final_state.clone(),
        prior_controls: prior,
        t_offset: n_est,
    };
    let ctrl = run_ebpc(system, trace, costs, &config, rng, Some(start))?;
    steps.extend(ctrl.steps.iter().copied());
    total_cost += ctrl.total_cost;
    let mut controls = phase1.controls;
    controls.extend(ctrl.controls);
    let mut observations = phase1.observations;
    observations.extend(ctrl.observations);
    Ok(TrialResult {
        steps,
        total_cost,
        final_policy: ctrl.final_policy,
        ynat_log: ctrl.ynat_log,
        controls,
        observations,
        estimation: Some(phase1.report),
        final_state: ctrl.final_state,
    })
}
