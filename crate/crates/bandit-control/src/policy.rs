//! Disturbance response controller (DRC) parameters.
//!
//! A policy is an array of `H` matrices `M^[0..H-1]`, each `d_u x d_y`,
//! producing controls as a linear function of recent nature's-y values:
//!
//! ```text
//! u_t = sum_{j=0}^{H-1} M^[j] ynat_{t-j}
//! ```
//!
//! The optimizer works over the flattened vector space of dimension
//! `H * d_u * d_y` (index `j*d_u*d_y + a*d_y + b` holds entry `M^[j][a,b]`),
//! so flattening is an isometry between the Frobenius norm on block arrays
//! and the Euclidean norm. Policy-class membership is measured in the
//! l1-operator norm `sum_j |M^[j]|_op`, which the Frobenius norm controls:
//! `sum_j |M^[j]|_op <= sqrt(H) |M|_F`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::lds::op_norm;
use crate::{Matrix, Vector};

/// Errors from policy construction and serialization.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("policy serialization: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An `H`-block DRC parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct DrcParams {
    blocks: Vec<Matrix>,
}

impl DrcParams {
    /// Wraps blocks after checking they are nonempty and uniformly shaped.
    pub fn new(blocks: Vec<Matrix>) -> Result<Self, PolicyError> {
        if blocks.is_empty() {
            return Err(PolicyError::Dimension("policy needs at least one block".into()));
        }
        let (d_u, d_y) = (blocks[0].nrows(), blocks[0].ncols());
        for (j, blk) in blocks.iter().enumerate() {
            if blk.nrows() != d_u || blk.ncols() != d_y {
                return Err(PolicyError::Dimension(format!(
                    "block {} is {}x{} but block 0 is {}x{}",
                    j,
                    blk.nrows(),
                    blk.ncols(),
                    d_u,
                    d_y
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// The zero policy.
    pub fn zero(h: usize, d_u: usize, d_y: usize) -> Self {
        Self { blocks: vec![Matrix::zeros(d_u, d_y); h.max(1)] }
    }

    /// Memory length `H`.
    pub fn h(&self) -> usize {
        self.blocks.len()
    }

    pub fn d_u(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn d_y(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Block `M^[j]`.
    pub fn block(&self, j: usize) -> &Matrix {
        &self.blocks[j]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Synthesizes the control `sum_j M^[j] ynat_recent[j]`. The slice must
    /// hold exactly `H` vectors, most recent first (zero-padded by the
    /// caller before time 1).
    pub fn control(&self, ynat_recent: &[Vector]) -> Result<Vector, PolicyError> {
        if ynat_recent.len() != self.h() {
            return Err(PolicyError::Dimension(format!(
                "expected {} recent signals, got {}",
                self.h(),
                ynat_recent.len()
            )));
        }
        let mut u = Vector::zeros(self.d_u());
        for (m, y) in self.blocks.iter().zip(ynat_recent) {
            if y.len() != self.d_y() {
                return Err(PolicyError::Dimension(format!(
                    "signal has dimension {} but the policy expects {}",
                    y.len(),
                    self.d_y()
                )));
            }
            u += m * y;
        }
        Ok(u)
    }

    /// Flattens to the optimizer's vector space; entry `M^[j][a,b]` lands at
    /// index `j*d_u*d_y + a*d_y + b`.
    pub fn flatten(&self) -> Vector {
        let (d_u, d_y) = (self.d_u(), self.d_y());
        let mut v = Vector::zeros(self.h() * d_u * d_y);
        for (j, m) in self.blocks.iter().enumerate() {
            for a in 0..d_u {
                for b in 0..d_y {
                    v[j * d_u * d_y + a * d_y + b] = m[(a, b)];
                }
            }
        }
        v
    }

    /// Inverse of [`DrcParams::flatten`].
    pub fn unflatten(v: &Vector, h: usize, d_u: usize, d_y: usize) -> Result<Self, PolicyError> {
        if v.len() != h * d_u * d_y {
            return Err(PolicyError::Dimension(format!(
                "vector of length {} cannot hold {}x{}x{} policy",
                v.len(),
                h,
                d_u,
                d_y
            )));
        }
        let blocks = (0..h)
            .map(|j| Matrix::from_fn(d_u, d_y, |a, b| v[j * d_u * d_y + a * d_y + b]))
            .collect();
        Self::new(blocks)
    }

    /// `sum_j |M^[j]|_op`: the policy-class norm.
    pub fn l1_op_norm(&self) -> f64 {
        self.blocks.iter().map(op_norm).sum()
    }

    /// Frobenius norm of the whole array (Euclidean norm of the flattening).
    pub fn fro_norm(&self) -> f64 {
        self.blocks.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    /// Writes one row per entry: `j,a,b,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PolicyError> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["j", "a", "b", "value"]).map_err(io_err)?;
        for (j, m) in self.blocks.iter().enumerate() {
            for a in 0..self.d_u() {
                for b in 0..self.d_y() {
                    wtr.write_record([
                        j.to_string(),
                        a.to_string(),
                        b.to_string(),
                        format!("{}", m[(a, b)]),
                    ])
                    .map_err(io_err)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a policy back from the row-per-entry CSV form.
    pub fn read_csv<R: BufRead>(
        reader: R,
        h: usize,
        d_u: usize,
        d_y: usize,
    ) -> Result<Self, PolicyError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut blocks = vec![Matrix::zeros(d_u, d_y); h];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| PolicyError::Format(e.to_string()))?;
            if rec.len() != 4 {
                return Err(PolicyError::Format(format!("expected 4 columns, got {}", rec.len())));
            }
            let idx = |i: usize| -> Result<usize, PolicyError> {
                rec[i].parse().map_err(|e| PolicyError::Format(format!("bad index: {e}")))
            };
            let (j, a, b) = (idx(0)?, idx(1)?, idx(2)?);
            if j >= h || a >= d_u || b >= d_y {
                return Err(PolicyError::Format(format!("entry ({j},{a},{b}) out of bounds")));
            }
            blocks[j][(a, b)] =
                rec[3].parse().map_err(|e| PolicyError::Format(format!("bad value: {e}")))?;
        }
        Self::new(blocks)
    }
}

fn io_err(e: csv::Error) -> PolicyError {
    PolicyError::Format(e.to_string())
}
