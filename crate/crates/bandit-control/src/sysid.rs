//! System identification: least-squares estimation of the Markov operator.
//!
//! The estimator excites the plant with i.i.d. standard Gaussian controls
//! and regresses observations on stacked control histories:
//!
//! ```text
//! Ghat^[0..H-1] = argmin sum_{t=H}^{N} | y_t - sum_{i=0}^{H-1} Ghat^[i] u_{t-i} |^2
//! ```
//!
//! with blocks beyond the fitted memory treated as zero. The regression is
//! solved by a rank-revealing factorization; rank-deficient regressor
//! matrices (zero or insufficient excitation) yield the minimum-norm
//! solution and a flagged report instead of an error. The leading block is
//! estimated rather than pinned at zero, so data generated by a strictly
//! causal plant yields `Ghat^[0]` near zero as a built-in sanity signal.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::lds::{op_norm, simulate_step, LdsError, LdsParams, LdsState, MarkovOperator, NoiseTrace};
use crate::{Matrix, Vector};

/// Errors from estimation setup.
#[derive(Debug, Error)]
pub enum SysidError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not enough data: need at least {need} steps, got {got}")]
    NotEnoughData { need: usize, got: usize },
    #[error("least-squares solve failed: {0}")]
    Solve(String),
    #[error(transparent)]
    Lds(#[from] LdsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of a least-squares identification run.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    /// Estimated operator, blocks `0..H-1`.
    pub g_hat: MarkovOperator,
    /// Number of driven steps `N`.
    pub n_samples: usize,
    /// Frobenius norm of the regression residual.
    pub residual: f64,
    /// `|Ghat - G|` in the l1-operator norm when ground truth is available.
    pub err_l1_op: Option<f64>,
    /// True when the regressors were rank deficient and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
}

#[derive(Serialize)]
struct ReportSummary {
    n: usize,
    residual: f64,
    err_l1_op: Option<f64>,
    rank_deficient: bool,
}

impl EstimationReport {
    /// Records the error against a known true operator.
    pub fn with_truth(mut self, g_true: &MarkovOperator) -> Self {
        self.err_l1_op = Some(estimation_error(&self.g_hat, g_true));
        self
    }

    /// One CSV row per block: index `i`, then the `d_y x d_u` entries in
    /// row-major order.
    pub fn write_blocks_csv<W: Write>(&self, out: W) -> Result<(), SysidError> {
        let mut wtr = csv::Writer::from_writer(out);
        let (d_y, d_u) = (self.g_hat.d_y(), self.g_hat.d_u());
        let mut header = vec!["i".to_string()];
        for r in 0..d_y {
            for c in 0..d_u {
                header.push(format!("g_{r}_{c}"));
            }
        }
        wtr.write_record(&header).map_err(|e| SysidError::Solve(e.to_string()))?;
        for (i, blk) in self.g_hat.blocks().iter().enumerate() {
            let mut row = vec![i.to_string()];
            for r in 0..d_y {
                for c in 0..d_u {
                    row.push(format!("{}", blk[(r, c)]));
                }
            }
            wtr.write_record(&row).map_err(|e| SysidError::Solve(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON summary `{ n, residual, err_l1_op, rank_deficient }`.
    pub fn summary_json(&self) -> String {
        serde_json::to_string(&ReportSummary {
            n: self.n_samples,
            residual: self.residual,
            err_l1_op: self.err_l1_op,
            rank_deficient: self.rank_deficient,
        })
        .expect("summary serializes")
    }
}

/// Least-squares fit of `h` Markov blocks from `N` observation/control
/// pairs, regressing `y_t` on `[u_t; u_{t-1}; ...; u_{t-h+1}]` for
/// `t = h..N`.
pub fn sysest_ls(
    observations: &[Vector],
    controls: &[Vector],
    h: usize,
) -> Result<EstimationReport, SysidError> {
    if h == 0 {
        return Err(SysidError::Dimension("memory length must be positive".into()));
    }
    if observations.len() != controls.len() {
        return Err(SysidError::Dimension(format!(
            "{} observations vs {} controls",
            observations.len(),
            controls.len()
        )));
    }
    let n = observations.len();
    if n < h {
        return Err(SysidError::NotEnoughData { need: h, got: n });
    }
    let d_y = observations[0].len();
    let d_u = controls[0].len();
    let rows = n - h + 1;
    let cols = d_u * h;
    let mut z = Matrix::zeros(rows, cols);
    let mut y = Matrix::zeros(rows, d_y);
    for (row, t) in (h..=n).enumerate() {
        for i in 0..h {
            let u = &controls[t - i - 1]; // u_{t-i}, 1-based time t
            if u.len() != d_u {
                return Err(SysidError::Dimension("ragged control dimensions".into()));
            }
            for k in 0..d_u {
                z[(row, i * d_u + k)] = u[k];
            }
        }
        let obs = &observations[t - 1];
        if obs.len() != d_y {
            return Err(SysidError::Dimension("ragged observation dimensions".into()));
        }
        for k in 0..d_y {
            y[(row, k)] = obs[k];
        }
    }
    // Rank-revealing least squares; singular values below the tolerance are
    // dropped, which yields the minimum-norm solution when excitation is
    // insufficient.
    let svd = z.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = f64::EPSILON * rows.max(cols) as f64 * sigma_max.max(1e-300);
    let rank = svd.rank(tol);
    let w = svd.solve(&y, tol).map_err(|e| SysidError::Solve(e.to_string()))?;
    let residual = (&z * &w - &y).norm();
    let blocks = (0..h)
        .map(|i| Matrix::from_fn(d_y, d_u, |r, c| w[(i * d_u + c, r)]))
        .collect();
    let g_hat = MarkovOperator::new(blocks)?;
    Ok(EstimationReport {
        g_hat,
        n_samples: n,
        residual,
        err_l1_op: None,
        rank_deficient: rank < cols,
    })
}

/// `sum_i |Ghat^[i] - G^[i]|_op`, padding the shorter operator with zero
/// blocks.
pub fn estimation_error(g_hat: &MarkovOperator, g_true: &MarkovOperator) -> f64 {
    let len = g_hat.len().max(g_true.len());
    let zero = Matrix::zeros(g_hat.d_y(), g_hat.d_u());
    (0..len)
        .map(|i| {
            let a = if i < g_hat.len() { g_hat.block(i) } else { &zero };
            let b = if i < g_true.len() { g_true.block(i) } else { &zero };
            op_norm(&(a - b))
        })
        .sum()
}

/// Everything produced by an estimation phase: the fitted operator plus the
/// logged rollout, so a controller can account for burn-in costs and resume
/// the plant from where estimation left off.
#[derive(Debug, Clone)]
pub struct EstimationPhase {
    pub report: EstimationReport,
    pub controls: Vec<Vector>,
    pub observations: Vec<Vector>,
    pub final_state: LdsState,
}

/// Drives the plant from the zero state for `n_steps` steps with i.i.d.
/// standard Gaussian controls, then fits `h` Markov blocks by least squares.
pub fn run_estimation_phase(
    system: &LdsParams,
    trace: &NoiseTrace,
    n_steps: usize,
    h: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EstimationPhase, SysidError> {
    if n_steps > trace.len() {
        return Err(SysidError::NotEnoughData { need: n_steps, got: trace.len() });
    }
    if n_steps < h {
        return Err(SysidError::NotEnoughData { need: h, got: n_steps });
    }
    let d_u = system.d_u();
    let mut state = LdsState::zero(system.d_x());
    let mut controls = Vec::with_capacity(n_steps);
    let mut observations = Vec::with_capacity(n_steps);
    for t in 1..=n_steps {
        let u = Vector::from_iterator(d_u, (0..d_u).map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        }));
        let (next, y_t) = simulate_step(&state, system, &u, &trace.w(t), &trace.e(t))?;
        controls.push(u);
        observations.push(y_t);
        state = next;
    }
    let report = sysest_ls(&observations, &controls, h)?;
    Ok(EstimationPhase { report, controls, observations, final_state: state })
}
