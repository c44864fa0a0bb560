//! Geometric substrate for interior-point bandit optimization.
//!
//! Provides the constraint sets the optimizer runs over, their
//! self-concordant log barriers, and the numerical kernels built on them:
//!
//! - barrier evaluation `R(x)` with analytic gradient and Hessian, blowing
//!   up at the boundary;
//! - Dikin-ellipsoid membership `v' (grad^2 R(x)) v <= 1`, whose unit ball at
//!   any interior point is contained in the set (the feasibility mechanism
//!   behind perturbed plays);
//! - symmetric positive definite inverse square roots, used to build the
//!   preconditioners `A = (grad^2 R(x) + eta sigma t I)^(-1/2)`;
//! - uniform sampling on the unit sphere (normalized Gaussian);
//! - a damped Newton minimizer for barrier-regularized convex objectives,
//!   with step length `1/(1+lambda)` in the damped phase (Newton decrement
//!   `lambda`) and backtracking as a numerical safety net.
//!
//! Supported sets are Euclidean balls, with barrier
//! `R(x) = -log(r^2 - |x-c|^2)`, and axis-aligned boxes, with barrier
//! `R(x) = sum_i [-log(x_i - l_i) - log(u_i - x_i)]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::{Matrix, Vector};

/// Errors from set construction, barrier evaluation, and the solvers.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is not strictly interior to the constraint set")]
    NotInterior,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: min eigenvalue {min_eig:e}")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("matrix is not symmetric: max asymmetry {0:e}")]
    NotSymmetric(f64),
    #[error("invalid constraint set: {0}")]
    InvalidSet(String),
    #[error("Newton solver stalled: gradient norm {grad_norm:e} after {iters} iterations")]
    NewtonStalled { grad_norm: f64, iters: usize },
}

/// Barrier value, gradient, and Hessian at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// A convex, closed, bounded set with nonempty interior, together with its
/// canonical log barrier.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    /// `{ x : |x - center| <= radius }`.
    EuclideanBall { center: Vector, radius: f64 },
    /// `{ x : lower <= x <= upper }` elementwise.
    Box { lower: Vector, upper: Vector },
}

impl ConstraintSet {
    /// Ball with explicit center and radius.
    pub fn ball(center: Vector, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::InvalidSet(format!("radius must be positive, got {radius}")));
        }
        Ok(Self::EuclideanBall { center, radius })
    }

    /// Unit ball centered at the origin.
    pub fn unit_ball(n: usize) -> Self {
        Self::EuclideanBall { center: Vector::zeros(n), radius: 1.0 }
    }

    /// Axis-aligned box; bounds must satisfy `lower < upper` elementwise.
    pub fn box_set(lower: Vector, upper: Vector) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l >= u) {
            return Err(GeometryError::InvalidSet(
                "box requires lower < upper elementwise".into(),
            ));
        }
        Ok(Self::Box { lower, upper })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::EuclideanBall { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
        }
    }

    /// Euclidean diameter of the set.
    pub fn diameter(&self) -> f64 {
        match self {
            Self::EuclideanBall { radius, .. } => 2.0 * radius,
            Self::Box { lower, upper } => (upper - lower).norm(),
        }
    }

    /// Barrier parameter of the canonical barrier; documentation metadata
    /// only, no computation depends on it.
    pub fn barrier_parameter(&self) -> f64 {
        match self {
            Self::EuclideanBall { .. } => 1.0,
            Self::Box { lower, .. } => 2.0 * lower.len() as f64,
        }
    }

    /// Closed-set membership with tolerance.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::EuclideanBall { center, radius } => (x - center).norm() <= radius + tol,
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol),
        }
    }

    /// Strict interior membership.
    pub fn is_interior(&self, x: &Vector) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::EuclideanBall { center, radius } => (x - center).norm() < *radius,
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(&xi, (&l, &u))| xi > l && xi < u),
        }
    }

    /// Barrier value, gradient, and Hessian at a strictly interior point.
    pub fn barrier_eval(&self, x: &Vector) -> Result<BarrierEval, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::Dimension(format!(
                "point has dimension {} but the set has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.is_interior(x) {
            return Err(GeometryError::NotInterior);
        }
        match self {
            Self::EuclideanBall { center, radius } => {
                let d = x - center;
                let slack = radius * radius - d.norm_squared();
                let value = -slack.ln();
                let grad = &d * (2.0 / slack);
                // hess = (2/slack) I + (4/slack^2) d d'
                let n = x.len();
                let mut hess = Matrix::identity(n, n) * (2.0 / slack);
                hess += &d * d.transpose() * (4.0 / (slack * slack));
                Ok(BarrierEval { value, grad, hess })
            }
            Self::Box { lower, upper } => {
                let n = x.len();
                let mut value = 0.0;
                let mut grad = Vector::zeros(n);
                let mut hess = Matrix::zeros(n, n);
                for i in 0..n {
                    let a = x[i] - lower[i];
                    let b = upper[i] - x[i];
                    value += -a.ln() - b.ln();
                    grad[i] = -1.0 / a + 1.0 / b;
                    hess[(i, i)] = 1.0 / (a * a) + 1.0 / (b * b);
                }
                Ok(BarrierEval { value, grad, hess })
            }
        }
    }

    /// The barrier's minimizer: ball center or box midpoint.
    pub fn analytic_center(&self) -> Vector {
        match self {
            Self::EuclideanBall { center, .. } => center.clone(),
            Self::Box { lower, upper } => (lower + upper) * 0.5,
        }
    }

    /// Whether `v` lies in the Dikin ellipsoid at `x`:
    /// `v' (grad^2 R(x)) v <= 1`. When true, `x + v` is guaranteed to lie in
    /// the closed set.
    pub fn dikin_contains(&self, x: &Vector, v: &Vector) -> Result<bool, GeometryError> {
        if v.len() != self.dim() {
            return Err(GeometryError::Dimension(format!(
                "direction has dimension {} but the set has dimension {}",
                v.len(),
                self.dim()
            )));
        }
        let eval = self.barrier_eval(x)?;
        Ok(v.dot(&(&eval.hess * v)) <= 1.0)
    }
}

const SYM_TOL: f64 = 1e-10;
const EIG_CLAMP: f64 = 1e-12;

/// Symmetric square root and inverse square root of an SPD matrix, computed
/// from one eigendecomposition so the pair is exactly mutually inverse at
/// the eigenvalue level.
#[derive(Debug, Clone)]
pub struct PsdSqrtPair {
    /// `M^(-1/2)`.
    pub inv_sqrt: Matrix,
    /// `M^(1/2)`, the inverse of `inv_sqrt`.
    pub sqrt: Matrix,
}

/// Computes `M^(-1/2)` and `M^(1/2)` for symmetric positive definite `M` by
/// eigendecomposition. Eigenvalues below a clamp floor are an error: inputs
/// here are barrier Hessians plus a positive multiple of the identity, so a
/// tiny eigenvalue signals a bug, not conditioning to be papered over.
pub fn psd_sqrt_pair(m: &Matrix) -> Result<PsdSqrtPair, GeometryError> {
    if m.nrows() != m.ncols() {
        return Err(GeometryError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYM_TOL * (1.0 + m.abs().max()) {
        return Err(GeometryError::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(GeometryError::NotPositiveDefinite { min_eig });
    }
    // Clamping is allowed only when it changes nothing beyond fp noise.
    if min_eig < EIG_CLAMP && (EIG_CLAMP - min_eig) / min_eig > 1e-8 {
        return Err(GeometryError::NotPositiveDefinite { min_eig });
    }
    let q = &eig.eigenvectors;
    let inv_sqrt_diag =
        Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(EIG_CLAMP).sqrt()));
    let sqrt_diag = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(EIG_CLAMP).sqrt()));
    let inv_sqrt = q * inv_sqrt_diag * q.transpose();
    let sqrt = q * sqrt_diag * q.transpose();
    // Symmetrize away rounding from the triple product.
    Ok(PsdSqrtPair {
        inv_sqrt: (&inv_sqrt + inv_sqrt.transpose()) * 0.5,
        sqrt: (&sqrt + sqrt.transpose()) * 0.5,
    })
}

/// `M^(-1/2)` for symmetric positive definite `M`; see [`psd_sqrt_pair`].
pub fn inv_sqrt_psd(m: &Matrix) -> Result<Matrix, GeometryError> {
    Ok(psd_sqrt_pair(m)?.inv_sqrt)
}

/// Uniform sample from the unit sphere in `n` dimensions: a standard
/// Gaussian vector, normalized. Degenerate draws (norm below 1e-12) are
/// redrawn.
pub fn sample_unit_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    assert!(n >= 1, "sphere dimension must be at least 1");
    loop {
        let v = Vector::from_iterator(n, (0..n).map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        }));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Euclidean projection onto a ball; the identity for interior points.
pub fn project_to_ball(x: &Vector, center: &Vector, radius: f64) -> Vector {
    let d = x - center;
    let norm = d.norm();
    if norm <= radius {
        x.clone()
    } else {
        center + d * (radius / norm)
    }
}

/// Objective interface for the damped Newton minimizer: cheap values for
/// backtracking, gradient and Hessian together for the step.
pub trait NewtonObjective {
    fn value(&self, x: &Vector) -> f64;
    fn grad_hess(&self, x: &Vector) -> (Vector, Matrix);
}

impl<V, GH> NewtonObjective for (V, GH)
where
    V: Fn(&Vector) -> f64,
    GH: Fn(&Vector) -> (Vector, Matrix),
{
    fn value(&self, x: &Vector) -> f64 {
        (self.0)(x)
    }

    fn grad_hess(&self, x: &Vector) -> (Vector, Matrix) {
        (self.1)(x)
    }
}

/// Stopping parameters for the Newton minimizer.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Gradient-norm tolerance declaring stationarity.
    pub grad_tol: f64,
    /// Maximum Newton iterations before reporting failure.
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-9, max_iters: 100 }
    }
}

/// Converged minimizer plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vector,
    pub iters: usize,
    pub grad_norm: f64,
}

fn solve_spd(h: &Matrix, rhs: &Vector) -> Result<Vector, GeometryError> {
    let n = h.nrows();
    let scale = 1.0 + h.trace().abs() / n as f64;
    let mut jitter = 0.0;
    for _ in 0..8 {
        let shifted = if jitter == 0.0 {
            h.clone()
        } else {
            h + Matrix::identity(n, n) * (jitter * scale)
        };
        if let Some(chol) = shifted.cholesky() {
            return Ok(chol.solve(rhs));
        }
        jitter = if jitter == 0.0 { 1e-14 } else { jitter * 100.0 };
    }
    Err(GeometryError::NotPositiveDefinite { min_eig: f64::NAN })
}

/// Minimizes a strictly convex objective whose domain is the interior of
/// `set` (barrier-regularized objectives blow up at the boundary). Damped
/// Newton: full steps once the Newton decrement is small, `1/(1+lambda)`
/// steps otherwise, halving further if a step leaves the interior or fails
/// to decrease the value.
pub fn newton_minimize<O: NewtonObjective>(
    objective: &O,
    set: &ConstraintSet,
    x0: &Vector,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, GeometryError> {
    if !set.is_interior(x0) {
        return Err(GeometryError::NotInterior);
    }
    let mut x = x0.clone();
    let mut value = objective.value(&x);
    for iter in 0..opts.max_iters {
        let (grad, hess) = objective.grad_hess(&x);
        let grad_norm = grad.norm();
        if grad_norm <= opts.grad_tol {
            return Ok(NewtonOutcome { x, iters: iter, grad_norm });
        }
        let dir = solve_spd(&hess, &(-&grad))?;
        let decrement_sq = -grad.dot(&dir);
        let lambda = decrement_sq.max(0.0).sqrt();
        let mut alpha = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &dir * alpha;
            if set.is_interior(&cand) {
                let cand_value = objective.value(&cand);
                if cand_value <= value + 1e-12 * (1.0 + value.abs()) {
                    x = cand;
                    value = cand_value;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No representable step makes progress; report the residual.
            return Err(GeometryError::NewtonStalled { grad_norm, iters: iter + 1 });
        }
    }
    let (grad, _) = objective.grad_hess(&x);
    let grad_norm = grad.norm();
    if grad_norm <= opts.grad_tol {
        Ok(NewtonOutcome { x, iters: opts.max_iters, grad_norm })
    } else {
        Err(GeometryError::NewtonStalled { grad_norm, iters: opts.max_iters })
    }
}
