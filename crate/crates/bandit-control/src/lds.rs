//! Linear dynamical system simulation.
//!
//! The plant follows the standard partially observed state-space recursion
//!
//! ```text
//! x_{t+1} = A x_t + B u_t + w_t        (state,       dimension d_x)
//! y_t     = C x_t + e_t                (observation, dimension d_y)
//! ```
//!
//! with controls `u_t` (dimension d_u), system perturbations `w_t`, and
//! observation perturbations `e_t`. Stability means spectral radius of `A`
//! below one.
//!
//! Two derived objects drive everything downstream:
//!
//! - the Markov operator `G`, with `G^[0] = 0` and `G^[i] = C A^{i-1} B`,
//!   mapping past controls to their effect on the present observation; its
//!   block operator norms decay geometrically for stable systems;
//! - nature's y, the counterfactual observation sequence the system would
//!   have produced under zero controls, recoverable online from observations
//!   as `y_t - sum_i G^[i] u_{t-i}`.
//!
//! Noise traces are semi-adversarial: an explicit sum of a deterministic
//! adversarial component and a seeded stochastic component, stored separately
//! so the decomposition stays inspectable. Step costs are quadratic,
//! `c_t(y, u) = y' Q_t y + u' R_t u`, with eigenvalue-certified convexity
//! bounds.

use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::rng_from_seed;
use crate::{Matrix, Vector};

/// Errors from system construction, simulation, and trace handling.
#[derive(Debug, Error)]
pub enum LdsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("system is not stable: spectral radius {rho} >= 1")]
    Unstable { rho: f64 },
    #[error("Markov operator needs at least one block")]
    EmptyOperator,
    #[error("noise trace must have at least one step")]
    EmptyTrace,
    #[error("cost matrices invalid: {0}")]
    InvalidCost(String),
    #[error("trace serialization: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The system triple `(A, B, C)` plus cached dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct LdsParams {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl LdsParams {
    /// Builds a system from its matrices, checking mutual dimension
    /// consistency. Stability is not required here; see [`LdsParams::new_stable`].
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self, LdsError> {
        if a.nrows() != a.ncols() {
            return Err(LdsError::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        if b.nrows() != a.nrows() {
            return Err(LdsError::Dimension(format!(
                "B has {} rows but the state dimension is {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if c.ncols() != a.nrows() {
            return Err(LdsError::Dimension(format!(
                "C has {} columns but the state dimension is {}",
                c.ncols(),
                a.nrows()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Like [`LdsParams::new`] but additionally rejects systems whose state
    /// transition has spectral radius at or above one.
    pub fn new_stable(a: Matrix, b: Matrix, c: Matrix) -> Result<Self, LdsError> {
        let params = Self::new(a, b, c)?;
        let rho = spectral_radius(&params.a)?;
        if rho >= 1.0 {
            return Err(LdsError::Unstable { rho });
        }
        Ok(params)
    }

    /// The damped double integrator benchmark system with identity
    /// observation: `A = [[0.9, 0.9], [-0.01, 0.9]]`, `B = [[0], [1]]`, `C = I`.
    pub fn double_integrator() -> Self {
        let a = Matrix::from_row_slice(2, 2, &[0.9, 0.9, -0.01, 0.9]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = Matrix::identity(2, 2);
        Self::new_stable(a, b, c).expect("double integrator is stable")
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// State dimension.
    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    /// Control dimension.
    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }

    /// Observation dimension.
    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }
}

/// Hidden state of the plant at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LdsState {
    /// Current hidden state.
    pub x: Vector,
    /// Time index; starts at 0 for the zero-initialized plant.
    pub t: usize,
}

impl LdsState {
    /// The zero state at time 0.
    pub fn zero(d_x: usize) -> Self {
        Self { x: Vector::zeros(d_x), t: 0 }
    }
}

/// Advances the plant one step: emits `y = C x + e`, then moves to
/// `x' = A x + B u + w`.
pub fn simulate_step(
    state: &LdsState,
    params: &LdsParams,
    u: &Vector,
    w: &Vector,
    e: &Vector,
) -> Result<(LdsState, Vector), LdsError> {
    if state.x.len() != params.d_x() {
        return Err(LdsError::Dimension(format!(
            "state has dimension {} but the system expects {}",
            state.x.len(),
            params.d_x()
        )));
    }
    if u.len() != params.d_u() || w.len() != params.d_x() || e.len() != params.d_y() {
        return Err(LdsError::Dimension(format!(
            "inputs (u: {}, w: {}, e: {}) do not match system dimensions (d_u: {}, d_x: {}, d_y: {})",
            u.len(),
            w.len(),
            e.len(),
            params.d_u(),
            params.d_x(),
            params.d_y()
        )));
    }
    let y = &params.c * &state.x + e;
    let x_next = &params.a * &state.x + &params.b * u + w;
    Ok((LdsState { x: x_next, t: state.t + 1 }, y))
}

/// Largest eigenvalue magnitude of a square matrix, computed by the QR
/// eigenvalue algorithm on a balanced copy.
pub fn spectral_radius(a: &Matrix) -> Result<f64, LdsError> {
    if a.nrows() != a.ncols() {
        return Err(LdsError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let balanced = balance(a.clone());
    let eigs = balanced.complex_eigenvalues();
    Ok(eigs.iter().map(|l| l.norm()).fold(0.0f64, f64::max))
}

/// Radix-2 balancing (Parlett-Reinsch): rescales rows and columns by powers
/// of two until each row and column off-diagonal mass is comparable.
/// Similarity transform, so eigenvalues are unchanged, but exactly so in
/// floating point because the scale factors are powers of two.
fn balance(mut a: Matrix) -> Matrix {
    let n = a.nrows();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
    a
}

/// Largest singular value of a matrix (operator norm).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0f64, |acc, &s| acc.max(s))
}

/// Truncated Markov operator: the blocks `G^[0..H_G-1]`, each `d_y x d_u`,
/// with `G^[0] = 0` definitionally for operators derived from a system.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOperator {
    blocks: Vec<Matrix>,
}

impl MarkovOperator {
    /// Wraps explicit blocks after checking shape consistency. Estimated
    /// operators may carry a nonzero (but small) leading block; operators
    /// built by [`MarkovOperator::from_params`] have it exactly zero.
    pub fn new(blocks: Vec<Matrix>) -> Result<Self, LdsError> {
        if blocks.is_empty() {
            return Err(LdsError::EmptyOperator);
        }
        let (d_y, d_u) = (blocks[0].nrows(), blocks[0].ncols());
        for (i, blk) in blocks.iter().enumerate() {
            if blk.nrows() != d_y || blk.ncols() != d_u {
                return Err(LdsError::Dimension(format!(
                    "block {} is {}x{} but block 0 is {}x{}",
                    i,
                    blk.nrows(),
                    blk.ncols(),
                    d_y,
                    d_u
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// The all-zero operator of the given truncation length and block shape.
    pub fn zero(h_g: usize, d_y: usize, d_u: usize) -> Self {
        Self { blocks: vec![Matrix::zeros(d_y, d_u); h_g.max(1)] }
    }

    /// `G^[0] = 0`, `G^[i] = C A^{i-1} B` for `i = 1..H_G-1`.
    pub fn from_params(params: &LdsParams, h_g: usize) -> Result<Self, LdsError> {
        if h_g == 0 {
            return Err(LdsError::EmptyOperator);
        }
        let mut blocks = Vec::with_capacity(h_g);
        blocks.push(Matrix::zeros(params.d_y(), params.d_u()));
        // a_pow = A^{i-1}, starting at the identity.
        let mut a_pow = Matrix::identity(params.d_x(), params.d_x());
        for _ in 1..h_g {
            blocks.push(&params.c * &a_pow * &params.b);
            a_pow = &params.a * a_pow;
        }
        Self::new(blocks)
    }

    /// Number of stored blocks (the truncation length `H_G`).
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn d_y(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn d_u(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Block `G^[i]`; `i` must be below the truncation length.
    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Sum of block operator norms over all stored blocks.
    pub fn l1_op_norm(&self) -> f64 {
        self.blocks.iter().map(op_norm).sum()
    }

    /// Sum of block operator norms for indices at or beyond `h`, over the
    /// stored truncation only.
    pub fn tail_norm(&self, h: usize) -> f64 {
        self.blocks.iter().skip(h).map(op_norm).sum()
    }

    /// Keeps only the first `h_g` blocks (padding with zero blocks if the
    /// operator is shorter).
    pub fn truncate(&self, h_g: usize) -> Self {
        let mut blocks: Vec<Matrix> = self.blocks.iter().take(h_g.max(1)).cloned().collect();
        while blocks.len() < h_g.max(1) {
            blocks.push(Matrix::zeros(self.d_y(), self.d_u()));
        }
        Self { blocks }
    }
}

/// Geometric decay certificate for a stable system's Markov operator:
/// `norm(G^[i]) <= kappa * r^(i-1)` with `rho(A) <= r < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCertificate {
    pub kappa: f64,
    pub r: f64,
}

impl DecayCertificate {
    /// Upper bound on the tail sum of block norms from index `h` on,
    /// `sum_{i >= h} kappa r^(i-1) = kappa r^(h-1) / (1 - r)`, for `h >= 1`.
    pub fn tail_bound(&self, h: usize) -> f64 {
        debug_assert!(h >= 1);
        self.kappa * self.r.powi(h as i32 - 1) / (1.0 - self.r)
    }
}

const DECAY_HORIZON: usize = 200;

/// Fits `(kappa, r)` such that `norm(C A^{i-1} B) <= kappa r^{i-1}` holds for
/// `i` up to a fixed horizon. Prefers `r = rho(A)`; if the bound at that rate
/// is still being driven by late indices (transient growth of a non-normal
/// `A` has not settled), `r` is widened toward one.
pub fn decay_certificate(params: &LdsParams) -> Result<DecayCertificate, LdsError> {
    let rho = spectral_radius(&params.a)?;
    if rho >= 1.0 {
        return Err(LdsError::Unstable { rho });
    }
    let mut norms = Vec::with_capacity(DECAY_HORIZON);
    let mut a_pow = Matrix::identity(params.d_x(), params.d_x());
    for _ in 0..DECAY_HORIZON {
        norms.push(op_norm(&(&params.c * &a_pow * &params.b)));
        a_pow = &params.a * a_pow;
    }
    let candidates: Vec<f64> = if rho == 0.0 {
        vec![0.5]
    } else {
        vec![rho, (3.0 * rho + 1.0) / 4.0, (rho + 1.0) / 2.0]
    };
    let mut chosen = (norms[0], *candidates.last().unwrap());
    for &r in &candidates {
        let mut kappa = 0.0f64;
        let mut arg = 0usize;
        for (i, &n) in norms.iter().enumerate() {
            let ratio = n / r.powi(i as i32);
            if ratio > kappa {
                kappa = ratio;
                arg = i;
            }
        }
        chosen = (kappa, r);
        // Max attained early means the rate genuinely dominates the tail.
        if arg < DECAY_HORIZON * 9 / 10 {
            break;
        }
    }
    Ok(DecayCertificate { kappa: chosen.0, r: chosen.1 })
}

/// Noise families for trace generation. All stochastic components are
/// Gaussian; the sinusoidal families carry a deterministic adversarial
/// component on `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// `w_t ~ N(0, sigma_w^2 I)`, `e_t ~ N(0, sigma_e^2 I)`.
    Gaussian { sigma_w: f64, sigma_e: f64 },
    /// `w_t = amplitude * sin(2 pi t / period) * ones` (deterministic),
    /// `e_t ~ N(0, sigma_e^2 I)`.
    Sinusoidal { amplitude: f64, period: f64, sigma_e: f64 },
    /// Gaussian random walk on `w`: `w_t = w_{t-1} + N(0, step_w^2 I)`;
    /// `e_t ~ N(0, sigma_e^2 I)`.
    GaussianWalk { step_w: f64, sigma_e: f64 },
    /// Sum of the sinusoidal adversarial component and full Gaussian noise
    /// on both channels; the explicit semi-adversarial decomposition.
    Composite { amplitude: f64, period: f64, sigma_w: f64, sigma_e: f64 },
}

impl NoiseKind {
    /// Standard deviation of the stochastic observation-noise component.
    pub fn sigma_e(&self) -> f64 {
        match self {
            NoiseKind::Gaussian { sigma_e, .. }
            | NoiseKind::Sinusoidal { sigma_e, .. }
            | NoiseKind::GaussianWalk { sigma_e, .. }
            | NoiseKind::Composite { sigma_e, .. } => *sigma_e,
        }
    }

    /// Standard deviation of the stochastic system-noise component
    /// (step size for the random walk).
    pub fn sigma_w(&self) -> f64 {
        match self {
            NoiseKind::Gaussian { sigma_w, .. } => *sigma_w,
            NoiseKind::Sinusoidal { .. } => 0.0,
            NoiseKind::GaussianWalk { step_w, .. } => *step_w,
            NoiseKind::Composite { sigma_w, .. } => *sigma_w,
        }
    }

    /// Advisory messages about degenerate parameters. A vanishing stochastic
    /// observation component breaks the conditional strong convexity the
    /// controller's defaults rely on.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sigma_e() <= 0.0 {
            out.push(
                "stochastic observation noise sigma_e <= 0: conditional strong convexity \
                 degenerates and the default optimizer parameters lose their justification"
                    .to_string(),
            );
        }
        out
    }
}

/// A length-`T` noise realization, stored as adversarial plus stochastic
/// components per channel so the decomposition stays inspectable.
/// `w(t) = w_adv(t) + w_stoch(t)` and likewise for `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub kind: NoiseKind,
    pub seed: u64,
    w_adv: Vec<Vector>,
    w_stoch: Vec<Vector>,
    e_adv: Vec<Vector>,
    e_stoch: Vec<Vector>,
}

impl NoiseTrace {
    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.w_adv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_adv.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.w_adv[0].len()
    }

    pub fn d_y(&self) -> usize {
        self.e_adv[0].len()
    }

    /// Total system perturbation at 1-based time `t`.
    pub fn w(&self, t: usize) -> Vector {
        &self.w_adv[t - 1] + &self.w_stoch[t - 1]
    }

    /// Total observation perturbation at 1-based time `t`.
    pub fn e(&self, t: usize) -> Vector {
        &self.e_adv[t - 1] + &self.e_stoch[t - 1]
    }

    /// Adversarial system component at 1-based time `t`.
    pub fn w_adv(&self, t: usize) -> &Vector {
        &self.w_adv[t - 1]
    }

    /// Stochastic system component at 1-based time `t`.
    pub fn w_stoch(&self, t: usize) -> &Vector {
        &self.w_stoch[t - 1]
    }

    /// Keeps the first `n` steps.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            kind: self.kind.clone(),
            seed: self.seed,
            w_adv: self.w_adv[..n].to_vec(),
            w_stoch: self.w_stoch[..n].to_vec(),
            e_adv: self.e_adv[..n].to_vec(),
            e_stoch: self.e_stoch[..n].to_vec(),
        }
    }

    /// Returns a copy with the first `n` steps zeroed on both channels: a
    /// silent warm-up segment ahead of an otherwise unchanged trace.
    pub fn silence_prefix(&self, n: usize) -> Self {
        let mut out = self.clone();
        let n = n.min(out.len());
        let (d_x, d_y) = (self.d_x(), self.d_y());
        for t in 0..n {
            out.w_adv[t] = Vector::zeros(d_x);
            out.w_stoch[t] = Vector::zeros(d_x);
            out.e_adv[t] = Vector::zeros(d_y);
            out.e_stoch[t] = Vector::zeros(d_y);
        }
        out
    }

    /// Drops the first `n` steps, keeping original time labels out of scope;
    /// the result is re-indexed from 1.
    pub fn suffix(&self, n: usize) -> Self {
        Self {
            kind: self.kind.clone(),
            seed: self.seed,
            w_adv: self.w_adv[n..].to_vec(),
            w_stoch: self.w_stoch[n..].to_vec(),
            e_adv: self.e_adv[n..].to_vec(),
            e_stoch: self.e_stoch[n..].to_vec(),
        }
    }

    /// Writes the summed trace as CSV with header
    /// `t,w_0,..,w_{d_x-1},e_0,..,e_{d_y-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LdsError> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.d_x()).map(|i| format!("w_{i}")));
        header.extend((0..self.d_y()).map(|i| format!("e_{i}")));
        wtr.write_record(&header)?;
        for t in 1..=self.len() {
            let mut row = vec![t.to_string()];
            let w = self.w(t);
            let e = self.e(t);
            row.extend(w.iter().map(|v| format!("{v}")));
            row.extend(e.iter().map(|v| format!("{v}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// The CSV serialization as bytes; the canonical form used for hashing
    /// and byte-level determinism checks.
    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a summed trace back from CSV. The decomposition is not
    /// recoverable from the file; both components land in the adversarial
    /// slot and `kind`/`seed` are placeholders.
    pub fn read_csv<R: BufRead>(reader: R, d_x: usize, d_y: usize) -> Result<Self, LdsError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| LdsError::TraceFormat(e.to_string()))?;
        if headers.len() != 1 + d_x + d_y || &headers[0] != "t" {
            return Err(LdsError::TraceFormat(format!(
                "expected header t,w_0..w_{},e_0..e_{}, got {:?}",
                d_x - 1,
                d_y - 1,
                headers
            )));
        }
        let mut w_adv = Vec::new();
        let mut e_adv = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| LdsError::TraceFormat(e.to_string()))?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| LdsError::TraceFormat(format!("bad float {s:?}: {e}")))
            };
            let mut w = Vector::zeros(d_x);
            for i in 0..d_x {
                w[i] = parse(&rec[1 + i])?;
            }
            let mut e = Vector::zeros(d_y);
            for i in 0..d_y {
                e[i] = parse(&rec[1 + d_x + i])?;
            }
            w_adv.push(w);
            e_adv.push(e);
        }
        if w_adv.is_empty() {
            return Err(LdsError::EmptyTrace);
        }
        let n = w_adv.len();
        Ok(Self {
            kind: NoiseKind::Gaussian { sigma_w: 0.0, sigma_e: 0.0 },
            seed: 0,
            w_adv,
            e_adv,
            w_stoch: vec![Vector::zeros(d_x); n],
            e_stoch: vec![Vector::zeros(d_y); n],
        })
    }
}

/// Generates a seeded noise trace. The trace owns its RNG stream; the same
/// `(kind, d_x, d_y, t_len, seed)` always reproduces the identical trace.
/// Draw order is fixed: per step, the stochastic `w` coordinates then the
/// stochastic `e` coordinates.
pub fn make_noise(
    kind: &NoiseKind,
    d_x: usize,
    d_y: usize,
    t_len: usize,
    seed: u64,
) -> Result<NoiseTrace, LdsError> {
    if t_len == 0 {
        return Err(LdsError::EmptyTrace);
    }
    let mut rng = rng_from_seed(seed);
    let mut gauss = |dim: usize, scale: f64| -> Vector {
        Vector::from_iterator(dim, (0..dim).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        }))
    };
    let mut w_adv = Vec::with_capacity(t_len);
    let mut w_stoch = Vec::with_capacity(t_len);
    let mut e_adv = Vec::with_capacity(t_len);
    let mut e_stoch = Vec::with_capacity(t_len);
    let mut walk = Vector::zeros(d_x);
    for t in 1..=t_len {
        let (wa, ws, es) = match kind {
            NoiseKind::Gaussian { sigma_w, sigma_e } => {
                (Vector::zeros(d_x), gauss(d_x, *sigma_w), gauss(d_y, *sigma_e))
            }
            NoiseKind::Sinusoidal { amplitude, period, sigma_e } => {
                let phase = (2.0 * std::f64::consts::PI * t as f64 / period).sin();
                (
                    Vector::from_element(d_x, amplitude * phase),
                    Vector::zeros(d_x),
                    gauss(d_y, *sigma_e),
                )
            }
            NoiseKind::GaussianWalk { step_w, sigma_e } => {
                walk += gauss(d_x, *step_w);
                (Vector::zeros(d_x), walk.clone(), gauss(d_y, *sigma_e))
            }
            NoiseKind::Composite { amplitude, period, sigma_w, sigma_e } => {
                let phase = (2.0 * std::f64::consts::PI * t as f64 / period).sin();
                (
                    Vector::from_element(d_x, amplitude * phase),
                    gauss(d_x, *sigma_w),
                    gauss(d_y, *sigma_e),
                )
            }
        };
        w_adv.push(wa);
        w_stoch.push(ws);
        e_adv.push(Vector::zeros(d_y));
        e_stoch.push(es);
    }
    Ok(NoiseTrace { kind: kind.clone(), seed, w_adv, w_stoch, e_adv, e_stoch })
}

/// Nature's y: the observation sequence under zero controls, rolled out from
/// the zero state. `x^nat_1 = 0`, `x^nat_{t+1} = A x^nat_t + w_t`,
/// `y^nat_t = C x^nat_t + e_t`.
pub fn natures_y_rollout(params: &LdsParams, trace: &NoiseTrace) -> Vec<Vector> {
    let t_len = trace.len();
    let mut out = Vec::with_capacity(t_len);
    let mut x = Vector::zeros(params.d_x());
    for t in 1..=t_len {
        out.push(&params.c * &x + trace.e(t));
        x = &params.a * x + trace.w(t);
    }
    out
}

/// Largest nature's-y norm along a trace; the empirical counterpart of the
/// signal-magnitude bound carried as a diagnostic.
pub fn nat_norm_bound(params: &LdsParams, trace: &NoiseTrace) -> f64 {
    natures_y_rollout(params, trace).iter().map(Vector::norm).fold(0.0, f64::max)
}

/// Recovers nature's y at the current step from the observation and past
/// controls: `y - sum_{i>=1} G^[i] u_{t-i}`. `controls` holds the most recent
/// control first; terms beyond the operator truncation or the available
/// history are dropped.
pub fn recover_natures_y(y_t: &Vector, controls: &[Vector], g: &MarkovOperator) -> Vector {
    let mut out = y_t.clone();
    for (i, u) in controls.iter().enumerate() {
        let block_idx = i + 1;
        if block_idx >= g.len() {
            break;
        }
        out -= g.block(block_idx) * u;
    }
    out
}

/// Quadratic step costs `c_t(y, u) = y' Q_t y + u' R_t u` with
/// eigenvalue-certified convexity constants. Supports a single
/// time-invariant pair or a per-step schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: Vec<Matrix>,
    r: Vec<Matrix>,
    /// Strong-convexity constant: least eigenvalue across all `Q_t`, `R_t`.
    pub sigma_c: f64,
    /// Smoothness constant: largest eigenvalue across all `Q_t`, `R_t`.
    pub beta_c: f64,
    /// Local Lipschitz constant `2 beta_c` for the quadratic form.
    pub l_c: f64,
}

const SYM_TOL: f64 = 1e-10;

fn eig_bounds(m: &Matrix, what: &str) -> Result<(f64, f64), LdsError> {
    if m.nrows() != m.ncols() {
        return Err(LdsError::InvalidCost(format!("{what} must be square")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYM_TOL * (1.0 + m.abs().max()) {
        return Err(LdsError::InvalidCost(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        return Err(LdsError::InvalidCost(format!(
            "{what} must be positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok((min, max))
}

impl CostSpec {
    /// Time-invariant costs. Both matrices must be symmetric positive
    /// definite; the convexity constants are certified from eigenvalues.
    pub fn new(q: Matrix, r: Matrix) -> Result<Self, LdsError> {
        Self::with_schedule(vec![q], vec![r])
    }

    /// Identity costs of the given dimensions.
    pub fn identity(d_y: usize, d_u: usize) -> Self {
        Self::new(Matrix::identity(d_y, d_y), Matrix::identity(d_u, d_u))
            .expect("identity costs are valid")
    }

    /// Per-step schedules. Step `t` uses entry `min(t-1, len-1)`, so a
    /// single-entry schedule is time-invariant.
    pub fn with_schedule(q: Vec<Matrix>, r: Vec<Matrix>) -> Result<Self, LdsError> {
        if q.is_empty() || r.is_empty() {
            return Err(LdsError::InvalidCost("cost schedule must be nonempty".into()));
        }
        let mut sigma_c = f64::INFINITY;
        let mut beta_c = f64::NEG_INFINITY;
        for m in &q {
            let (lo, hi) = eig_bounds(m, "Q")?;
            sigma_c = sigma_c.min(lo);
            beta_c = beta_c.max(hi);
        }
        for m in &r {
            let (lo, hi) = eig_bounds(m, "R")?;
            sigma_c = sigma_c.min(lo);
            beta_c = beta_c.max(hi);
        }
        Ok(Self { q, r, sigma_c, beta_c, l_c: 2.0 * beta_c })
    }

    /// Cost matrix `Q_t` for 1-based step `t`.
    pub fn q_at(&self, t: usize) -> &Matrix {
        &self.q[(t - 1).min(self.q.len() - 1)]
    }

    /// Cost matrix `R_t` for 1-based step `t`.
    pub fn r_at(&self, t: usize) -> &Matrix {
        &self.r[(t - 1).min(self.r.len() - 1)]
    }

    /// Evaluates `y' Q_t y + u' R_t u`; nonnegative by construction.
    pub fn eval(&self, t: usize, y: &Vector, u: &Vector) -> f64 {
        let q = self.q_at(t);
        let r = self.r_at(t);
        (y.transpose() * q * y)[(0, 0)] + (u.transpose() * r * u)[(0, 0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::RngExt;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::from_row_slice(&[a, b])
    }

    #[test]
    fn simulate_step_zero_dynamics_identity() {
        // A = 0, B = I, C = I: the control passes straight into the next state.
        let p = LdsParams::new(Matrix::zeros(1, 1), Matrix::identity(1, 1), Matrix::identity(1, 1))
            .unwrap();
        let s = LdsState::zero(1);
        let (next, y) = simulate_step(
            &s,
            &p,
            &Vector::from_row_slice(&[1.0]),
            &Vector::zeros(1),
            &Vector::zeros(1),
        )
        .unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(next.x[0], 1.0);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn simulate_step_homogeneous_recursion() {
        let p = LdsParams::double_integrator();
        let x0 = vec2(0.3, -0.7);
        let mut s = LdsState { x: x0.clone(), t: 0 };
        let zero_u = Vector::zeros(1);
        let zero_w = Vector::zeros(2);
        let zero_e = Vector::zeros(2);
        let steps = 7;
        for _ in 0..steps {
            let (next, _) = simulate_step(&s, &p, &zero_u, &zero_w, &zero_e).unwrap();
            s = next;
        }
        let mut a_pow = Matrix::identity(2, 2);
        for _ in 0..steps {
            a_pow = p.a() * a_pow;
        }
        let expected = p.c() * &a_pow * &x0;
        let (_, y) = simulate_step(&s, &p, &zero_u, &zero_w, &zero_e).unwrap();
        assert_relative_eq!(y, expected, epsilon = 1e-12);
    }

    #[test]
    fn simulate_step_double_integrator_arithmetic() {
        let p = LdsParams::double_integrator();
        let s = LdsState { x: vec2(1.0, 0.0), t: 0 };
        let (next, _) = simulate_step(&s, &p, &Vector::zeros(1), &Vector::zeros(2), &Vector::zeros(2))
            .unwrap();
        assert_relative_eq!(next.x, vec2(0.9, -0.01), epsilon = 1e-15);
    }

    #[test]
    fn simulate_step_rejects_dimension_mismatch() {
        let p = LdsParams::double_integrator();
        let s = LdsState::zero(2);
        let err = simulate_step(&s, &p, &Vector::zeros(3), &Vector::zeros(2), &Vector::zeros(2));
        assert!(matches!(err, Err(LdsError::Dimension(_))));
    }

    #[test]
    fn spectral_radius_identity_and_zero() {
        assert_relative_eq!(spectral_radius(&Matrix::identity(2, 2)).unwrap(), 1.0);
        assert_relative_eq!(spectral_radius(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        assert!(spectral_radius(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spectral_radius_closed_form_2x2() {
        // Eigenvalues of the damped double integrator: 0.9 +- i sqrt(0.009),
        // magnitude sqrt(0.81 + 0.009) = sqrt(0.819).
        let a = LdsParams::double_integrator().a().clone();
        assert_relative_eq!(spectral_radius(&a).unwrap(), 0.819f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn stable_constructor_rejects_unit_radius() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::identity(2, 2);
        let c = Matrix::identity(2, 2);
        assert!(matches!(LdsParams::new_stable(a, b, c), Err(LdsError::Unstable { .. })));
    }

    #[test]
    fn markov_operator_zero_dynamics() {
        let p = LdsParams::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2))
            .unwrap();
        let g = MarkovOperator::from_params(&p, 4).unwrap();
        assert_eq!(g.block(0), &Matrix::zeros(2, 2));
        assert_eq!(g.block(1), &Matrix::identity(2, 2));
        assert_eq!(g.block(2), &Matrix::zeros(2, 2));
        assert_eq!(g.block(3), &Matrix::zeros(2, 2));
    }

    #[test]
    fn markov_operator_scalar_products() {
        let p = LdsParams::new(
            Matrix::from_element(1, 1, 0.9),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let g = MarkovOperator::from_params(&p, 3).unwrap();
        assert_eq!(g.block(0)[(0, 0)], 0.0);
        assert_relative_eq!(g.block(1)[(0, 0)], 1.0);
        assert_relative_eq!(g.block(2)[(0, 0)], 0.9);
    }

    #[test]
    fn markov_operator_leading_block_always_zero() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let a = Matrix::from_fn(3, 3, |_, _| 0.2 * rng.random::<f64>() - 0.1);
            let b = Matrix::from_fn(3, 2, |_, _| rng.random::<f64>());
            let c = Matrix::from_fn(2, 3, |_, _| rng.random::<f64>());
            let p = LdsParams::new(a, b, c).unwrap();
            let g = MarkovOperator::from_params(&p, 5).unwrap();
            assert_eq!(g.block(0), &Matrix::zeros(2, 2));
        }
    }

    #[test]
    fn decay_certificate_zero_dynamics() {
        let p = LdsParams::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2))
            .unwrap();
        let cert = decay_certificate(&p).unwrap();
        assert!(cert.r > 0.0 && cert.r < 1.0);
        assert_relative_eq!(cert.kappa, 1.0); // norm(C B) = norm(I) = 1
    }

    #[test]
    fn decay_certificate_scalar_geometric() {
        let p = LdsParams::new(
            Matrix::from_element(1, 1, 0.9),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let cert = decay_certificate(&p).unwrap();
        assert_relative_eq!(cert.r, 0.9, epsilon = 1e-12);
        assert_relative_eq!(cert.kappa, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn decay_certificate_double_integrator_bound_holds() {
        let p = LdsParams::double_integrator();
        let cert = decay_certificate(&p).unwrap();
        assert!(cert.r <= 0.95, "r = {}", cert.r);
        let mut a_pow = Matrix::identity(2, 2);
        for i in 1..=200usize {
            let n = op_norm(&(p.c() * &a_pow * p.b()));
            assert!(
                n <= cert.kappa * cert.r.powi(i as i32 - 1) + 1e-12,
                "certificate violated at i={i}: {n} > {}",
                cert.kappa * cert.r.powi(i as i32 - 1)
            );
            a_pow = p.a() * a_pow;
        }
    }

    #[test]
    fn decay_certificate_random_stable_systems() {
        let mut rng = rng_from_seed(11);
        for trial in 0..8 {
            let raw = Matrix::from_fn(3, 3, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            let rho = spectral_radius(&raw).unwrap();
            let a = raw * (0.85 / rho.max(1e-6));
            let b = Matrix::from_fn(3, 2, |_, _| rng.random::<f64>() - 0.5);
            let c = Matrix::from_fn(2, 3, |_, _| rng.random::<f64>() - 0.5);
            let p = LdsParams::new_stable(a, b, c).unwrap();
            let cert = decay_certificate(&p).unwrap();
            let mut a_pow = Matrix::identity(3, 3);
            for i in 1..=200usize {
                let n = op_norm(&(p.c() * &a_pow * p.b()));
                assert!(
                    n <= cert.kappa * cert.r.powi(i as i32 - 1) + 1e-10,
                    "trial {trial} violated at i={i}"
                );
                a_pow = p.a() * a_pow;
            }
        }
    }

    #[test]
    fn natures_y_zero_trace_is_zero() {
        let p = LdsParams::double_integrator();
        let trace = make_noise(
            &NoiseKind::Gaussian { sigma_w: 0.0, sigma_e: 0.0 },
            2,
            2,
            10,
            0,
        )
        .unwrap();
        for y in natures_y_rollout(&p, &trace) {
            assert_eq!(y.norm(), 0.0);
        }
    }

    #[test]
    fn natures_y_one_step_memory_when_a_zero() {
        let p = LdsParams::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2))
            .unwrap();
        let trace =
            make_noise(&NoiseKind::Gaussian { sigma_w: 0.5, sigma_e: 0.3 }, 2, 2, 12, 9).unwrap();
        let ys = natures_y_rollout(&p, &trace);
        for t in 1..=12usize {
            let expected = if t == 1 { trace.e(1) } else { trace.e(t) + trace.w(t - 1) };
            assert_relative_eq!(ys[t - 1], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn natures_y_matches_convolution_closed_form() {
        // Independent evaluation: y^nat_t = e_t + sum_{i=1}^{t-1} C A^{t-i-1} w_i.
        let mut rng = rng_from_seed(21);
        let raw = Matrix::from_fn(3, 3, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let rho = spectral_radius(&raw).unwrap();
        let a = raw * (0.8 / rho);
        let p = LdsParams::new_stable(a, Matrix::identity(3, 3), Matrix::from_fn(3, 3, |i, j| {
            if i == j { 1.0 } else { 0.25 }
        }))
        .unwrap();
        let trace =
            make_noise(&NoiseKind::Gaussian { sigma_w: 1.0, sigma_e: 1.0 }, 3, 3, 20, 5).unwrap();
        let ys = natures_y_rollout(&p, &trace);
        for t in 1..=20usize {
            let mut expected = trace.e(t);
            for i in 1..t {
                let mut a_pow = Matrix::identity(3, 3);
                for _ in 0..(t - i - 1) {
                    a_pow = p.a() * a_pow;
                }
                expected += p.c() * a_pow * trace.w(i);
            }
            assert_relative_eq!(ys[t - 1], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn recover_natures_y_trivial_cases() {
        let p = LdsParams::double_integrator();
        let g = MarkovOperator::from_params(&p, 5).unwrap();
        let y = vec2(0.4, -1.2);
        // No controls played yet.
        assert_eq!(recover_natures_y(&y, &[], &g), y);
        // Zero operator leaves the observation unchanged.
        let gz = MarkovOperator::zero(5, 2, 1);
        let us = vec![Vector::from_row_slice(&[3.0]); 4];
        assert_eq!(recover_natures_y(&y, &us, &gz), y);
        // Zero controls likewise.
        let uz = vec![Vector::zeros(1); 4];
        assert_eq!(recover_natures_y(&y, &uz, &g), y);
    }

    #[test]
    fn recover_natures_y_matches_rollout_under_controls() {
        // Simulate 50 steps with nonzero controls; recovery with the exact
        // (untruncated) operator must reproduce the zero-control rollout.
        let p = LdsParams::double_integrator();
        let t_len = 50usize;
        let trace =
            make_noise(&NoiseKind::Gaussian { sigma_w: 0.2, sigma_e: 0.1 }, 2, 2, t_len, 33)
                .unwrap();
        let g = MarkovOperator::from_params(&p, t_len + 1).unwrap();
        let ynat = natures_y_rollout(&p, &trace);
        let mut rng = rng_from_seed(77);
        let mut state = LdsState::zero(2);
        let mut controls_recent_first: Vec<Vector> = Vec::new();
        for t in 1..=t_len {
            let u = Vector::from_fn(1, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            let (next, y) = simulate_step(&state, &p, &u, &trace.w(t), &trace.e(t)).unwrap();
            let recovered = recover_natures_y(&y, &controls_recent_first, &g);
            assert_relative_eq!(recovered, ynat[t - 1], epsilon = 1e-10);
            controls_recent_first.insert(0, u);
            state = next;
        }
    }

    #[test]
    fn make_noise_zero_sigmas_gives_zero_trace() {
        let trace =
            make_noise(&NoiseKind::Gaussian { sigma_w: 0.0, sigma_e: 0.0 }, 2, 2, 5, 1).unwrap();
        for t in 1..=5 {
            assert_eq!(trace.w(t).norm(), 0.0);
            assert_eq!(trace.e(t).norm(), 0.0);
        }
    }

    #[test]
    fn make_noise_sinusoidal_quarter_period() {
        // period 40 at t = 10: sin(pi/2) = 1, so w = amplitude * ones.
        let c = 0.37;
        let trace = make_noise(
            &NoiseKind::Sinusoidal { amplitude: c, period: 40.0, sigma_e: 0.0 },
            2,
            1,
            10,
            0,
        )
        .unwrap();
        assert_relative_eq!(trace.w(10), Vector::from_element(2, c), epsilon = 1e-12);
        // The adversarial/stochastic split is explicit.
        assert_eq!(trace.w_stoch(10).norm(), 0.0);
        assert_relative_eq!(trace.w_adv(10).clone(), Vector::from_element(2, c), epsilon = 1e-12);
    }

    #[test]
    fn make_noise_same_seed_identical_bytes() {
        let kind = NoiseKind::Composite { amplitude: 0.5, period: 40.0, sigma_w: 0.2, sigma_e: 0.1 };
        let a = make_noise(&kind, 2, 2, 64, 123).unwrap();
        let b = make_noise(&kind, 2, 2, 64, 123).unwrap();
        assert_eq!(a.csv_bytes(), b.csv_bytes());
        let c = make_noise(&kind, 2, 2, 64, 124).unwrap();
        assert_ne!(a.csv_bytes(), c.csv_bytes());
    }

    #[test]
    fn noise_csv_round_trip() {
        let kind = NoiseKind::Gaussian { sigma_w: 0.3, sigma_e: 0.2 };
        let trace = make_noise(&kind, 2, 2, 16, 5).unwrap();
        let bytes = trace.csv_bytes();
        let parsed = NoiseTrace::read_csv(&bytes[..], 2, 2).unwrap();
        assert_eq!(parsed.len(), 16);
        for t in 1..=16 {
            assert_relative_eq!(parsed.w(t), trace.w(t), epsilon = 1e-12);
            assert_relative_eq!(parsed.e(t), trace.e(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn silence_prefix_zeroes_only_leading_steps() {
        let kind = NoiseKind::Gaussian { sigma_w: 0.3, sigma_e: 0.2 };
        let trace = make_noise(&kind, 2, 2, 20, 5).unwrap();
        let silenced = trace.silence_prefix(7);
        assert_eq!(silenced.len(), 20);
        for t in 1..=7 {
            assert_eq!(silenced.w(t).norm(), 0.0);
            assert_eq!(silenced.e(t).norm(), 0.0);
        }
        for t in 8..=20 {
            assert_eq!(silenced.w(t), trace.w(t));
            assert_eq!(silenced.e(t), trace.e(t));
        }
        // Over-long prefixes clamp instead of panicking.
        assert_eq!(trace.silence_prefix(100).w(20).norm(), 0.0);
    }

    #[test]
    fn gaussian_walk_accumulates() {
        let trace =
            make_noise(&NoiseKind::GaussianWalk { step_w: 0.1, sigma_e: 0.0 }, 2, 2, 30, 8)
                .unwrap();
        // Walk increments are independent; consecutive differences must be
        // the raw steps, so re-summing reproduces the walk.
        let mut acc = Vector::zeros(2);
        for t in 1..=30 {
            let inc = trace.w(t) - &acc;
            acc += inc;
            assert_relative_eq!(trace.w(t), acc, epsilon = 1e-12);
        }
        assert!(acc.norm() > 0.0);
    }

    #[test]
    fn sigma_e_warning_fires_only_when_degenerate() {
        assert!(NoiseKind::Gaussian { sigma_w: 0.1, sigma_e: 0.0 }.warnings().len() == 1);
        assert!(NoiseKind::Gaussian { sigma_w: 0.1, sigma_e: 0.1 }.warnings().is_empty());
    }

    #[test]
    fn cost_eval_examples() {
        let spec = CostSpec::identity(2, 1);
        assert_eq!(spec.eval(1, &Vector::zeros(2), &Vector::zeros(1)), 0.0);
        let y = vec2(1.0, 1.0);
        let u = Vector::from_row_slice(&[2.0]);
        assert_relative_eq!(spec.eval(1, &y, &u), 6.0);
    }

    #[test]
    fn cost_lipschitz_bound_on_samples() {
        // |c(z) - c(z')| <= L (max norm) * norm(z - z') with L = 2 beta_c.
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = Matrix::from_element(1, 1, 0.5);
        let spec = CostSpec::new(q, r).unwrap();
        let mut rng = rng_from_seed(14);
        for _ in 0..200 {
            let y1 = Vector::from_fn(2, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let u1 = Vector::from_fn(1, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let y2 = Vector::from_fn(2, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let u2 = Vector::from_fn(1, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let z1 = (y1.norm_squared() + u1.norm_squared()).sqrt();
            let z2 = (y2.norm_squared() + u2.norm_squared()).sqrt();
            let dz = ((&y1 - &y2).norm_squared() + (&u1 - &u2).norm_squared()).sqrt();
            let lhs = (spec.eval(1, &y1, &u1) - spec.eval(1, &y2, &u2)).abs();
            assert!(lhs <= spec.l_c * z1.max(z2) * dz + 1e-12);
        }
    }

    #[test]
    fn cost_strong_convexity_certificate() {
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = Matrix::from_element(1, 1, 0.5);
        let spec = CostSpec::new(q.clone(), r).unwrap();
        assert!(spec.sigma_c > 0.0);
        // Q - sigma_c I stays positive semidefinite.
        let shifted = q - Matrix::identity(2, 2) * spec.sigma_c;
        let eigs = shifted.symmetric_eigenvalues();
        assert!(eigs.iter().all(|&l| l >= -1e-12));
        // Rejects indefinite Q.
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CostSpec::new(bad, Matrix::identity(1, 1)).is_err());
    }

    #[test]
    fn cost_schedule_clamps_to_last_entry() {
        let spec = CostSpec::with_schedule(
            vec![Matrix::identity(1, 1), Matrix::from_element(1, 1, 3.0)],
            vec![Matrix::identity(1, 1)],
        )
        .unwrap();
        let y = Vector::from_row_slice(&[1.0]);
        let u = Vector::zeros(1);
        assert_relative_eq!(spec.eval(1, &y, &u), 1.0);
        assert_relative_eq!(spec.eval(2, &y, &u), 3.0);
        assert_relative_eq!(spec.eval(99, &y, &u), 3.0);
    }

    #[test]
    fn markov_l1_and_tail_norms() {
        let blocks = vec![
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2) * 2.0,
        ];
        let g = MarkovOperator::new(blocks).unwrap();
        assert_relative_eq!(g.l1_op_norm(), 3.0);
        assert_relative_eq!(g.tail_norm(2), 2.0);
        assert_relative_eq!(g.tail_norm(3), 0.0);
        let t = g.truncate(2);
        assert_eq!(t.len(), 2);
        let padded = g.truncate(5);
        assert_eq!(padded.len(), 5);
        assert_eq!(padded.block(4), &Matrix::zeros(2, 2));
    }
}
