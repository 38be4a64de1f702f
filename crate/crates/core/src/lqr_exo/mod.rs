//! One DM's optimal affine response to an exogenous environment process.
//!
//! Against an environment `(z_t)` that the DM treats as independent of its
//! own actions, the optimal control is
//! `u_k = F_k x_k + sum_{t >= k} G_{k,t} E[z_t | Z_{k-1}] + H_k`,
//! with gains that depend only on the DM's own matrices. This module
//! computes the Riccati ladder and those gains (finite and infinite
//! horizon) and evaluates the exact expected cost of such policies.

mod cost;
mod finite;
mod infinite;

pub use cost::{eval_exo_cost, eval_exo_cost_infinite, EnvStateSpace, ExoEnvLaw, OwnNoise, COST_STAGE_BUDGET, COST_TAIL_TOL};
pub use finite::{exo_gains_finite, riccati_finite, FiniteExoPolicy, RiccatiLadder};
pub use infinite::{exo_gains_infinite, riccati_algebraic, AlgebraicRiccati, InfiniteExoPolicy, RiccatiOptions};

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};

/// The three pieces of the completed-square stage cost
/// `|x + Q^-1 L'z|_Q^2 + |u + R^-1 K'z|_R^2 - |z|^2_{L Q^-1 L' + K R^-1 K'}`.
#[derive(Debug, Clone)]
pub struct CompletedSquares {
    pub q: Mat,
    pub r: Mat,
    /// `Q^-1 L'` (n x p).
    pub x_shift: Mat,
    /// `R^-1 K'` (m x p).
    pub u_shift: Mat,
    /// `L Q^-1 L' + K R^-1 K'` (p x p).
    pub correction: Mat,
}

impl CompletedSquares {
    /// Evaluates the completed-square form.
    pub fn eval(&self, x: &Vector, u: &Vector, z: &Vector) -> f64 {
        let xs = x + &self.x_shift * z;
        let us = u + &self.u_shift * z;
        xs.dot(&(&self.q * &xs)) + us.dot(&(&self.r * &us)) - z.dot(&(&self.correction * z))
    }
}

/// Rewrites `x'Qx + u'Ru + 2 z'(K u + L x)` by completing the squares.
pub fn complete_squares(q: &Mat, r: &Mat, k: &Mat, l: &Mat) -> Result<CompletedSquares> {
    linalg::require_pd(q, "Q")?;
    linalg::require_pd(r, "R")?;
    let x_shift = linalg::spd_solve(q, &l.transpose(), "Q")?;
    let u_shift = linalg::spd_solve(r, &k.transpose(), "R")?;
    let correction = linalg::sym(&(l * &x_shift + k * &u_shift));
    Ok(CompletedSquares { q: q.clone(), r: r.clone(), x_shift, u_shift, correction })
}

/// Original quadratic stage cost `x'Qx + u'Ru + 2 z'(K u + L x)`.
pub fn stage_cost(q: &Mat, r: &Mat, k: &Mat, l: &Mat, x: &Vector, u: &Vector, z: &Vector) -> f64 {
    x.dot(&(q * x)) + u.dot(&(r * u)) + 2.0 * z.dot(&(k * u + l * x))
}
