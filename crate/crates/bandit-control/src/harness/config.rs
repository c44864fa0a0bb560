//! Experiment config schema: JSON in, validated and expanded structs out.
//! Validation collects every violation before failing so a bad config is
//! rejected with the full list, not one complaint at a time.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::{dare_solve, LqrGain};
use crate::lds::{CostSpec, LdsParams, NoiseKind};
use crate::Matrix;

/// Plant selection: a named preset or explicit matrices as nested row
/// arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset { preset: String },
    Explicit { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>> },
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(format!("{what} must be a nonempty matrix"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{what} has ragged rows"));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl SystemSpec {
    /// Builds the plant, expanding presets first.
    pub fn expand(&self) -> Result<LdsParams, String> {
        match self {
            SystemSpec::Preset { preset } => match preset.as_str() {
                "double_integrator" => Ok(LdsParams::double_integrator()),
                other => Err(format!(
                    "unknown system preset {other:?}; available: \"double_integrator\""
                )),
            },
            SystemSpec::Explicit { a, b, c } => {
                let a = matrix_from_rows(a, "system.a")?;
                let b = matrix_from_rows(b, "system.b")?;
                let c = matrix_from_rows(c, "system.c")?;
                LdsParams::new(a, b, c).map_err(|e| e.to_string())
            }
        }
    }
}

/// Static quadratic cost matrices as nested row arrays. Omitted in the
/// config means identity weights on both the observation and the control.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostMatrices {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

fn default_h() -> usize {
    5
}
fn default_r() -> f64 {
    0.5
}
fn default_c_eta() -> f64 {
    100.0
}
fn default_c_sigma() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_lr() -> f64 {
    1e-4
}
fn default_r_bound() -> f64 {
    0.5
}

/// One controller entry in the experiment. The bandit controllers take the
/// theorem-shaped step size `c_eta / (d_u d_y L H^3 sqrt(T))` and strong
/// convexity `c_sigma * sigma_default`; `stabilize` hands the controller
/// the optimal gain so it runs on the pre-stabilized loop (requires full
/// observation, `C = I`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    EbpcKnown {
        #[serde(default = "default_h")]
        h: usize,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_c_eta")]
        c_eta: f64,
        #[serde(default = "default_c_sigma")]
        c_sigma: f64,
        #[serde(default)]
        stabilize: bool,
    },
    EbpcUnknown {
        #[serde(default = "default_h")]
        h: usize,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_c_eta")]
        c_eta: f64,
        #[serde(default = "default_c_sigma")]
        c_sigma: f64,
    },
    Bpc {
        #[serde(default = "default_h")]
        h: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_r_bound")]
        r_bound: f64,
        #[serde(default)]
        stabilize: bool,
    },
    Lqr,
    Zero,
}

impl ControllerSpec {
    /// Controller family name used in file names and summary rows.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ControllerSpec::EbpcKnown { .. } => "ebpc_known",
            ControllerSpec::EbpcUnknown { .. } => "ebpc_unknown",
            ControllerSpec::Bpc { .. } => "bpc",
            ControllerSpec::Lqr => "lqr",
            ControllerSpec::Zero => "zero",
        }
    }

}

/// Class the hindsight oracle optimizes over: policy memory `h`, embedded
/// Frobenius radius `r / sqrt(h)`, whether the class sits on the
/// pre-stabilized loop, and whether to also solve the slower full
/// l1-operator-ball oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub stabilize: bool,
    #[serde(default)]
    pub l1op: bool,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { h: default_h(), r: default_r(), stabilize: false, l1op: false }
    }
}

fn default_window() -> usize {
    50
}

/// A full experiment: plant, noise process, cost, controller roster,
/// horizon, seeds, and output knobs. One JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub noise: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostMatrices>,
    pub controllers: Vec<ControllerSpec>,
    pub t: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_window")]
    pub moving_avg_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_multipliers: Option<Vec<f64>>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Everything derived from a valid config that trials share read-only.
#[derive(Debug)]
pub(crate) struct ResolvedExperiment {
    pub system: LdsParams,
    pub costs: CostSpec,
    /// Optimal gain, solved once when any controller or the oracle needs it.
    pub gain: Option<LqrGain>,
    /// One unique name per controller entry, in config order.
    pub names: Vec<String>,
}

fn is_identity(c: &Matrix) -> bool {
    c.is_square() && (c - Matrix::identity(c.nrows(), c.ncols())).norm() == 0.0
}

impl ExperimentConfig {
    /// Validates the whole document and expands presets, returning every
    /// violation at once on failure.
    pub(crate) fn resolve(&self) -> Result<ResolvedExperiment, HarnessError> {
        let mut violations = Vec::new();
        if self.t < 1 {
            violations.push("t must be at least 1".to_string());
        }
        if self.controllers.is_empty() {
            violations.push("at least one controller is required".to_string());
        }
        if self.seeds.is_empty() {
            violations.push("seeds must be nonempty".to_string());
        } else {
            let mut sorted = self.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.seeds.len() {
                violations.push("seeds must be distinct".to_string());
            }
        }
        if self.moving_avg_window < 1 {
            violations.push("moving_avg_window must be at least 1".to_string());
        }
        if let Some(values) = &self.eta_multipliers {
            if values.is_empty() {
                violations.push("eta_multipliers, when present, must be nonempty".to_string());
            }
            if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                violations.push("eta_multipliers must all be positive and finite".to_string());
            }
        }

        let system = match self.system.expand() {
            Ok(system) => Some(system),
            Err(msg) => {
                violations.push(msg);
                None
            }
        };

        let costs = match (&system, &self.cost) {
            (Some(system), None) => {
                Some(CostSpec::identity(system.d_y(), system.d_u()))
            }
            (Some(system), Some(spec)) => {
                let built = matrix_from_rows(&spec.q, "cost.q").and_then(|q| {
                    let r = matrix_from_rows(&spec.r, "cost.r")?;
                    if q.nrows() != system.d_y() {
                        return Err(format!(
                            "cost.q is {}x{} but observations have dimension {}",
                            q.nrows(),
                            q.ncols(),
                            system.d_y()
                        ));
                    }
                    if r.nrows() != system.d_u() {
                        return Err(format!(
                            "cost.r is {}x{} but controls have dimension {}",
                            r.nrows(),
                            r.ncols(),
                            system.d_u()
                        ));
                    }
                    CostSpec::new(q, r).map_err(|e| e.to_string())
                });
                match built {
                    Ok(costs) => Some(costs),
                    Err(msg) => {
                        violations.push(msg);
                        None
                    }
                }
            }
            (None, _) => None,
        };

        let full_observation = system.as_ref().is_some_and(|s| is_identity(s.c()));
        let mut needs_gain = self.oracle.stabilize;
        for (idx, spec) in self.controllers.iter().enumerate() {
            let tag = format!("controllers[{idx}] ({})", spec.kind_name());
            match spec {
                ControllerSpec::EbpcKnown { h, r, c_eta, c_sigma, stabilize } => {
                    if *h < 1 {
                        violations.push(format!("{tag}: h must be at least 1"));
                    }
                    if !(*r > 0.0) || !(*c_eta > 0.0) || !(*c_sigma > 0.0) {
                        violations
                            .push(format!("{tag}: r, c_eta, and c_sigma must be positive"));
                    }
                    if self.t < *h {
                        violations.push(format!("{tag}: t must be at least h = {h}"));
                    }
                    if *stabilize {
                        needs_gain = true;
                        if system.is_some() && !full_observation {
                            violations.push(format!(
                                "{tag}: stabilize requires full observation (C = I)"
                            ));
                        }
                    }
                }
                ControllerSpec::EbpcUnknown { h, r, c_eta, c_sigma } => {
                    if *h < 1 {
                        violations.push(format!("{tag}: h must be at least 1"));
                    }
                    if !(*r > 0.0) || !(*c_eta > 0.0) || !(*c_sigma > 0.0) {
                        violations
                            .push(format!("{tag}: r, c_eta, and c_sigma must be positive"));
                    }
                    let n_est = (self.t as f64).sqrt().ceil() as usize;
                    if n_est < 3 * h || self.t.saturating_sub(n_est) < 3 * h {
                        violations.push(format!(
                            "{tag}: horizon t = {} cannot fit an estimation phase of \
                             ceil(sqrt(t)) = {n_est} steps plus a control phase, both at \
                             least 3h = {}",
                            self.t,
                            3 * h
                        ));
                    }
                }
                ControllerSpec::Bpc { h, delta, lr, r_bound, stabilize } => {
                    if *h < 1 {
                        violations.push(format!("{tag}: h must be at least 1"));
                    }
                    if !(*delta > 0.0) || !(*lr > 0.0) || !(*r_bound > 0.0) {
                        violations
                            .push(format!("{tag}: delta, lr, and r_bound must be positive"));
                    }
                    if system.is_some() && !full_observation {
                        violations.push(format!(
                            "{tag}: the perturbation controller acts on state disturbances \
                             and requires full observation (C = I)"
                        ));
                    }
                    if *stabilize {
                        needs_gain = true;
                    }
                }
                ControllerSpec::Lqr => {
                    needs_gain = true;
                    if system.is_some() && !full_observation {
                        violations.push(format!(
                            "{tag}: the gain baseline requires full observation (C = I)"
                        ));
                    }
                }
                ControllerSpec::Zero => {}
            }
        }

        if self.oracle.h < 1 {
            violations.push("oracle.h must be at least 1".to_string());
        }
        if !(self.oracle.r > 0.0) {
            violations.push("oracle.r must be positive".to_string());
        }
        if self.oracle.stabilize && system.is_some() && !full_observation {
            violations
                .push("oracle.stabilize requires full observation (C = I)".to_string());
        }

        let gain = match (&system, &costs, needs_gain) {
            (Some(system), Some(costs), true) => {
                match dare_solve(system.a(), system.b(), costs.q_at(1), costs.r_at(1)) {
                    Ok(gain) => Some(gain),
                    Err(e) => {
                        violations.push(format!("optimal gain unavailable: {e}"));
                        None
                    }
                }
            }
            _ => None,
        };

        if !violations.is_empty() {
            return Err(HarnessError::Config(violations.join("; ")));
        }
        let names = unique_names(&self.controllers);
        Ok(ResolvedExperiment {
            system: system.expect("validated"),
            costs: costs.expect("validated"),
            gain,
            names,
        })
    }
}

// Duplicate controller kinds get _2, _3, ... suffixes in config order so
// file names and summary rows stay unambiguous.
fn unique_names(controllers: &[ControllerSpec]) -> Vec<String> {
    let mut counts: Vec<(&'static str, usize)> = Vec::new();
    controllers
        .iter()
        .map(|spec| {
            let kind = spec.kind_name();
            match counts.iter_mut().find(|(k, _)| *k == kind) {
                Some((_, n)) => {
                    *n += 1;
                    format!("{kind}_{n}")
                }
                None => {
                    counts.push((kind, 1));
                    kind.to_string()
                }
            }
        })
        .collect()
}

/// The default experiment: double integrator under Gaussian noise with the
/// calibrated controller roster, 2000 steps, 12 seeds, window 50.
pub fn default_preset() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemSpec::Preset { preset: "double_integrator".to_string() },
        noise: NoiseKind::Gaussian { sigma_w: 0.1, sigma_e: 0.1 },
        cost: None,
        controllers: vec![
            ControllerSpec::EbpcKnown {
                h: 5,
                r: 0.5,
                c_eta: 100.0,
                c_sigma: 1.0,
                stabilize: true,
            },
            ControllerSpec::Bpc { h: 5, delta: 0.1, lr: 1e-4, r_bound: 0.5, stabilize: true },
            ControllerSpec::Lqr,
            ControllerSpec::Zero,
        ],
        t: 2000,
        seeds: (1..=12).collect(),
        moving_avg_window: 50,
        eta_multipliers: None,
        oracle: OracleSpec { h: 5, r: 0.5, stabilize: true, l1op: false },
        out_dir: None,
    }
}

/// The three standard noise studies on the default plant. The random-walk
/// variant uses the wider, slower policy settings that stay stable as the
/// disturbance level drifts.
pub fn preset_variants() -> Vec<(&'static str, ExperimentConfig)> {
    let gaussian = default_preset();
    let mut sinusoidal = default_preset();
    sinusoidal.noise =
        NoiseKind::Sinusoidal { amplitude: 0.1, period: 40.0, sigma_e: 0.1 };
    let mut walk = default_preset();
    walk.noise = NoiseKind::GaussianWalk { step_w: 0.01, sigma_e: 0.1 };
    walk.controllers = vec![
        ControllerSpec::EbpcKnown { h: 5, r: 1.0, c_eta: 30.0, c_sigma: 1.0, stabilize: true },
        ControllerSpec::Bpc { h: 5, delta: 0.1, lr: 1e-4, r_bound: 0.5, stabilize: true },
        ControllerSpec::Lqr,
        ControllerSpec::Zero,
    ];
    walk.oracle = OracleSpec { h: 5, r: 1.0, stabilize: true, l1op: false };
    vec![("gaussian", gaussian), ("sinusoidal", sinusoidal), ("gaussian_walk", walk)]
}
