//! Trial orchestration: one trace per seed, every controller on the same
//! trace, one hindsight oracle per trace, deterministic reduction.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ControllerSpec, ExperimentConfig, ResolvedExperiment};
use super::HarnessError;
use crate::baselines::{
    best_drc_hindsight_l1op_with, best_drc_hindsight_with, run_bpc, run_lqr, run_zero,
    BpcConfig,
};
use crate::control::{
    eta_default, run_ebpc, run_ebpc_unknown, sigma_default_known, sigma_default_unknown,
    stabilized_natures_y, stabilized_params, EbpcConfig, UnknownModeSpec,
};
use crate::lds::{make_noise, natures_y_rollout, MarkovOperator, NoiseTrace};
use crate::seeding::{
    derive_seed, rng_from_seed, STREAM_BASELINE, STREAM_ESTIMATION, STREAM_OPTIMIZER,
    STREAM_TRACE,
};
use crate::sysid::run_estimation_phase;

/// One (controller, seed) run: totals, regrets against the shared oracle,
/// and the per-step series the CSV emitters consume.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub controller: String,
    pub seed: u64,
    /// FNV-1a hash of the full noise trace, identical across every
    /// controller of the same seed (oblivious adversary evidence).
    pub trace_hash: u64,
    pub total_cost: f64,
    /// `total_cost - oracle_cost` on the same trace, exactly.
    pub regret_fro: f64,
    pub regret_l1op: Option<f64>,
    pub costs: Vec<f64>,
    pub moving_avg: Vec<f64>,
}

/// The hindsight oracle solved once per seed.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRecord {
    pub seed: u64,
    pub trace_hash: u64,
    pub cost_fro: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_l1op: Option<f64>,
    pub converged: bool,
}

/// Across-seed statistics for one controller (sample standard deviation).
#[derive(Debug, Clone, Serialize)]
pub struct ControllerAggregate {
    pub controller: String,
    pub total_cost_mean: f64,
    pub total_cost_std: f64,
    pub regret_fro_mean: f64,
    pub regret_fro_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_l1op_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_l1op_std: Option<f64>,
}

/// Everything a finished experiment produced, in config order.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub t: usize,
    pub moving_avg_window: usize,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
    pub oracles: Vec<OracleRecord>,
    pub aggregates: Vec<ControllerAggregate>,
}

/// Trailing mean over the last `min(window, t)` entries at each 1-based
/// index `t`; no lookahead. `window` must be at least 1.
pub fn moving_average(losses: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    (0..losses.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            losses[lo..=t].iter().sum::<f64>() / (t - lo + 1) as f64
        })
        .collect()
}

/// Reads and parses a JSON experiment config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })
}

fn fnv1a_feed(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= u64::from(b);
        *hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
}

fn trace_hash(trace: &NoiseTrace) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for t in 1..=trace.len() {
        for v in trace.w(t).iter() {
            fnv1a_feed(&mut hash, &v.to_le_bytes());
        }
        for v in trace.e(t).iter() {
            fnv1a_feed(&mut hash, &v.to_le_bytes());
        }
    }
    hash
}

struct SeedData {
    seed: u64,
    trace: NoiseTrace,
    hash: u64,
    oracle: OracleRecord,
}

fn prepare_seed(
    config: &ExperimentConfig,
    resolved: &ResolvedExperiment,
    seed: u64,
) -> Result<SeedData, HarnessError> {
    let system = &resolved.system;
    let trace = make_noise(
        &config.noise,
        system.d_x(),
        system.d_y(),
        config.t,
        derive_seed(seed, STREAM_TRACE),
    )?;
    let hash = trace_hash(&trace);
    // The oracle's counterfactual world: the raw plant, or the loop already
    // closed by the optimal gain when the policy class rides on top of it.
    let (ynat, oracle_plant, stabilizer) = if config.oracle.stabilize {
        let gain = resolved.gain.as_ref().expect("resolve() solved the gain");
        (
            stabilized_natures_y(system, &gain.k, &trace)?,
            stabilized_params(system, &gain.k)?,
            Some(gain.k.clone()),
        )
    } else {
        (natures_y_rollout(system, &trace), system.clone(), None)
    };
    let g = MarkovOperator::from_params(&oracle_plant, config.oracle.h)?;
    let fro = best_drc_hindsight_with(
        &g,
        &ynat,
        &resolved.costs,
        config.oracle.h,
        config.oracle.r,
        stabilizer.as_ref(),
    )?;
    let l1op = if config.oracle.l1op {
        Some(best_drc_hindsight_l1op_with(
            &g,
            &ynat,
            &resolved.costs,
            config.oracle.h,
            config.oracle.r,
            stabilizer.as_ref(),
        )?)
    } else {
        None
    };
    Ok(SeedData {
        seed,
        hash,
        oracle: OracleRecord {
            seed,
            trace_hash: hash,
            cost_fro: fro.total_cost,
            cost_l1op: l1op.as_ref().map(|r| r.total_cost),
            converged: fro.converged && l1op.as_ref().is_none_or(|r| r.converged),
        },
        trace,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    resolved: &ResolvedExperiment,
    spec: &ControllerSpec,
    name: &str,
    data: &SeedData,
) -> Result<TrialRecord, HarnessError> {
    let system = &resolved.system;
    let costs = &resolved.costs;
    let t = config.t;
    let result = match spec {
        ControllerSpec::EbpcKnown { h, r, c_eta, c_sigma, stabilize } => {
            let (faced, stabilizer) = if *stabilize {
                let gain = resolved.gain.as_ref().expect("resolve() solved the gain");
                (stabilized_params(system, &gain.k)?, Some(gain.k.clone()))
            } else {
                (system.clone(), None)
            };
            let g = MarkovOperator::from_params(&faced, *h)?;
            let eta = eta_default(system.d_u(), system.d_y(), costs.l_c, *h, t, *c_eta);
            // The theorem's noise floor vanishes on a noiseless trace; any
            // positive value keeps the optimizer well-posed, and nothing
            // depends on it when every gradient is zero.
            let sigma = (c_sigma
                * sigma_default_known(
                    &faced,
                    costs.sigma_c,
                    config.noise.sigma_w(),
                    config.noise.sigma_e(),
                ))
            .max(1e-12);
            let mut ebpc = EbpcConfig::new(*h, *r, t, g, eta, sigma)?;
            ebpc.stabilizer = stabilizer;
            run_ebpc(
                system,
                &data.trace,
                costs,
                &ebpc,
                rng_from_seed(derive_seed(data.seed, STREAM_OPTIMIZER)),
                None,
            )?
        }
        ControllerSpec::EbpcUnknown { h, r, c_eta, c_sigma } => {
            let spec = UnknownModeSpec {
                base_h: *h,
                base_r: *r,
                t_horizon: t,
                eta: eta_default(system.d_u(), system.d_y(), costs.l_c, 3 * h, t, *c_eta),
                sigma: (c_sigma
                    * sigma_default_unknown(costs.sigma_c, config.noise.sigma_e()))
                .max(1e-12),
            };
            run_ebpc_unknown(
                system,
                &data.trace,
                costs,
                &spec,
                rng_from_seed(derive_seed(data.seed, STREAM_OPTIMIZER)),
            )?
        }
        ControllerSpec::Bpc { h, delta, lr, r_bound, stabilize } => {
            let mut bpc = BpcConfig::new(*h, *delta, *lr, *r_bound, t)?;
            if *stabilize {
                let gain = resolved.gain.as_ref().expect("resolve() solved the gain");
                bpc.stabilizer = Some(gain.k.clone());
            }
            run_bpc(
                system,
                &data.trace,
                costs,
                &bpc,
                rng_from_seed(derive_seed(data.seed, STREAM_BASELINE)),
            )?
        }
        ControllerSpec::Lqr => {
            let gain = resolved.gain.as_ref().expect("resolve() solved the gain");
            run_lqr(system, &data.trace, costs, gain, t)?
        }
        ControllerSpec::Zero => run_zero(system, &data.trace, costs, t)?,
    };
    let costs_series = result.costs();
    let moving_avg = moving_average(&costs_series, config.moving_avg_window);
    Ok(TrialRecord {
        controller: name.to_string(),
        seed: data.seed,
        trace_hash: data.hash,
        total_cost: result.total_cost,
        regret_fro: result.total_cost - data.oracle.cost_fro,
        regret_l1op: data.oracle.cost_l1op.map(|o| result.total_cost - o),
        costs: costs_series,
        moving_avg,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Worker pool honoring the `BANDIT_CONTROL_THREADS` cap.
fn build_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("BANDIT_CONTROL_THREADS") {
        let n: usize = raw.trim().parse().map_err(|_| {
            HarnessError::Config(format!(
                "BANDIT_CONTROL_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        if n == 0 {
            return Err(HarnessError::Config(
                "BANDIT_CONTROL_THREADS must be at least 1".to_string(),
            ));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// Runs the whole experiment: per seed one trace and one oracle, every
/// controller on the identical trace, everything reduced in config order.
/// A pure function of the config; thread count only changes wall time.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RegretReport, HarnessError> {
    let resolved = config.resolve()?;
    let pool = build_pool()?;
    pool.install(|| {
        let seeds: Vec<SeedData> = config
            .seeds
            .par_iter()
            .map(|&seed| prepare_seed(config, &resolved, seed))
            .collect::<Result<_, _>>()?;
        // Controller-major so each controller's seeds land contiguously.
        let jobs: Vec<(usize, usize)> = (0..config.controllers.len())
            .flat_map(|ci| (0..seeds.len()).map(move |si| (ci, si)))
            .collect();
        let trials: Vec<TrialRecord> = jobs
            .par_iter()
            .map(|&(ci, si)| {
                run_trial(
                    config,
                    &resolved,
                    &config.controllers[ci],
                    &resolved.names[ci],
                    &seeds[si],
                )
            })
            .collect::<Result<_, _>>()?;
        let aggregates = resolved
            .names
            .iter()
            .map(|name| {
                let rows: Vec<&TrialRecord> =
                    trials.iter().filter(|tr| &tr.controller == name).collect();
                let totals: Vec<f64> = rows.iter().map(|tr| tr.total_cost).collect();
                let regrets: Vec<f64> = rows.iter().map(|tr| tr.regret_fro).collect();
                let l1ops: Vec<f64> =
                    rows.iter().filter_map(|tr| tr.regret_l1op).collect();
                let (total_cost_mean, total_cost_std) = mean_std(&totals);
                let (regret_fro_mean, regret_fro_std) = mean_std(&regrets);
                let (regret_l1op_mean, regret_l1op_std) = if l1ops.len() == rows.len() {
                    let (m, s) = mean_std(&l1ops);
                    (Some(m), Some(s))
                } else {
                    (None, None)
                };
                ControllerAggregate {
                    controller: name.clone(),
                    total_cost_mean,
                    total_cost_std,
                    regret_fro_mean,
                    regret_fro_std,
                    regret_l1op_mean,
                    regret_l1op_std,
                }
            })
            .collect();
        Ok(RegretReport {
            t: config.t,
            moving_avg_window: config.moving_avg_window,
            trials,
            oracles: seeds.into_iter().map(|s| s.oracle).collect(),
            aggregates,
        })
    })
}

/// Runs the experiment once per step-size multiplier, overriding `c_eta`
/// on every bandit controller entry. Requires at least one such entry.
pub fn sweep_experiment(
    config: &ExperimentConfig,
    values: &[f64],
) -> Result<Vec<(f64, RegretReport)>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one multiplier".to_string()));
    }
    let has_bandit = config.controllers.iter().any(|c| {
        matches!(c, ControllerSpec::EbpcKnown { .. } | ControllerSpec::EbpcUnknown { .. })
    });
    if !has_bandit {
        return Err(HarnessError::Config(
            "sweep varies the bandit step size but the config has no ebpc controller"
                .to_string(),
        ));
    }
    values
        .iter()
        .map(|&value| {
            let mut swept = config.clone();
            for spec in &mut swept.controllers {
                match spec {
                    ControllerSpec::EbpcKnown { c_eta, .. }
                    | ControllerSpec::EbpcUnknown { c_eta, .. } => *c_eta = value,
                    _ => {}
                }
            }
            run_experiment(&swept).map(|report| (value, report))
        })
        .collect()
}

/// One row of the identification study: a seed, a sample budget, and the
/// quality of the operator fitted from that budget.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationRecord {
    pub seed: u64,
    /// Number of Gaussian-excited steps the fit used.
    pub n: usize,
    /// Frobenius norm of the regression residual.
    pub residual: f64,
    /// l1-operator error against the true operator of the configured plant.
    pub err_l1_op: f64,
    pub rank_deficient: bool,
}

/// Identification-only study: per seed, drives the plant with Gaussian
/// excitation on that seed's noise trace and fits the first `oracle.h`
/// Markov blocks at a ladder of sample budgets (quarter, half, and full
/// horizon). Budgets share the excitation stream, so a larger budget
/// extends the smaller run rather than redrawing it.
///
/// The plant identified is the one the policies face: the raw system, or
/// the loop already closed by the optimal gain when `oracle.stabilize` is
/// set. Truncated least squares is only consistent when the operator's
/// mass past `h` blocks is small, so an open-loop-unstable system should
/// be studied in stabilized form.
pub fn run_estimation_study(
    config: &ExperimentConfig,
) -> Result<Vec<EstimationRecord>, HarnessError> {
    let resolved = config.resolve()?;
    let system = if config.oracle.stabilize {
        let gain = resolved.gain.as_ref().expect("resolve() solved the gain");
        stabilized_params(&resolved.system, &gain.k)?
    } else {
        resolved.system.clone()
    };
    let system = &system;
    let h = config.oracle.h;
    let mut budgets: Vec<usize> = [config.t / 4, config.t / 2, config.t]
        .into_iter()
        .filter(|&n| n >= 3 * h)
        .collect();
    budgets.dedup();
    if budgets.is_empty() {
        return Err(HarnessError::Config(format!(
            "t = {} leaves no estimation budget of at least 3h = {}",
            config.t,
            3 * h
        )));
    }
    let g_true = MarkovOperator::from_params(system, h)?;
    let pool = build_pool()?;
    pool.install(|| {
        let per_seed: Vec<Vec<EstimationRecord>> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let trace = make_noise(
                    &config.noise,
                    system.d_x(),
                    system.d_y(),
                    config.t,
                    derive_seed(seed, STREAM_TRACE),
                )?;
                budgets
                    .iter()
                    .map(|&n| {
                        let mut rng =
                            rng_from_seed(derive_seed(seed, STREAM_ESTIMATION));
                        let phase =
                            run_estimation_phase(system, &trace, n, h, &mut rng)?;
                        let report = phase.report.with_truth(&g_true);
                        Ok(EstimationRecord {
                            seed,
                            n,
                            residual: report.residual,
                            err_l1_op: report
                                .err_l1_op
                                .expect("with_truth records the error"),
                            rank_deficient: report.rank_deficient,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, HarnessError>>()?;
        Ok(per_seed.into_iter().flatten().collect())
    })
}
