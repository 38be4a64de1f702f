//! Strongly-exo-belief equilibria of linear-quadratic-Gaussian games.
//!
//! Every group plays its exo-optimal response to the environment forecast
//! it would hold if the environment were exogenous. Consistency requires
//! those forecasts to be the actual conditional means of the closed loop,
//! which turns into a linear system per stage (finite horizon) or a
//! fixed point on a time-invariant ansatz (infinite horizon).

mod assemble;
mod finite;
mod meanfield;
mod stationary;

pub use assemble::{assemble_closed_loop, assemble_stationary, control_effect, feedback_blocks, ClosedLoopCoeffs, StationaryCoeffs};
pub use finite::{
    build_sebeu_finite, env_system, forecast_states, solve_all_env_equations, solve_env_equations, EnvAffineSolution, EnvSystem,
    SebeuFinite, SINGULARITY_COND,
};
pub use meanfield::{solve_mean_field, MeanFieldSolution};
pub use stationary::{
    build_sebeu_infinite_stationary, solve_infinite_env_fixedpoint, EnvFixedPoint, FixedPointOptions, SebeuStationary,
    STATIONARY_RESIDUAL_TOL,
};

use crate::linalg::{self, Mat, Vector};
use crate::simulate::controller::{Controller, ControllerInit, ControllerStage};

/// Per-group strategy `u_t = F_t x_t + G_t Xhat_{t|t-1} + h_t` where
/// `Xhat` is the belief-model estimate of the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGains {
    pub f: Vec<Mat>,
    pub g: Vec<Mat>,
    pub h: Vec<Vector>,
}

/// One stage of the model every DM uses to forecast the environment:
/// `y = D X + Gp Xhat + hp + xi` and `X' = A X + GX Xhat + hx + C y + W`,
/// filtered by a predictor with gain `gain`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefStage {
    pub d: Mat,
    pub gp: Mat,
    pub hp: Vector,
    pub a: Mat,
    pub gx: Mat,
    pub hx: Vector,
    pub c: Mat,
    pub gain: Mat,
}

/// Law of the first estimate `Xhat_{0|-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefInit {
    /// `Xhat_0 = constant + coef * y_{-1}` with error covariance `sigma`.
    FromPrevious { constant: Vector, coef: Mat, sigma: Mat },
    /// Steady state: `Xhat_0 ~ N(x_hat0, theta - sigma)` and
    /// `X_0 - Xhat_0 ~ N(0, sigma)` independent.
    Stationary { x_hat0: Vector, sigma: Mat, theta: Mat },
}

impl BeliefInit {
    pub fn sigma(&self) -> &Mat {
        match self {
            BeliefInit::FromPrevious { sigma, .. } | BeliefInit::Stationary { sigma, .. } => sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefModel {
    /// One per stage; the last repeats.
    pub stages: Vec<BeliefStage>,
    pub init: BeliefInit,
    pub xi_mean: Vector,
    pub xi_cov: Mat,
    pub w_mean: Vector,
    pub w_cov: Mat,
    /// Prediction error covariances `Sigma_{t|t-1}`.
    pub sigma: Vec<Mat>,
}

impl BeliefModel {
    pub fn stage(&self, t: usize) -> &BeliefStage {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    /// Fills the predictor gains and error covariances over `horizon` stages.
    pub(crate) fn run_kalman(&mut self, horizon: usize) {
        let mut sigma = self.init.sigma().clone();
        self.sigma = vec![sigma.clone()];
        for t in 0..horizon {
            let st = &mut self.stages[t];
            let (gain, next) = kalman_step(&st.a, &st.d, &sigma, &self.xi_cov, &self.w_cov);
            st.gain = gain;
            sigma = next;
            self.sigma.push(sigma.clone());
        }
    }

    /// The controller a group with gains `g` runs: its internal state is
    /// the belief estimate.
    pub fn controller(&self, g: &GroupGains) -> Controller {
        let stages = (0..g.f.len())
            .map(|t| {
                let st = self.stage(t);
                let l = &st.gain;
                ControllerStage {
                    f: g.f[t].clone(),
                    j: g.g[t].clone(),
                    h: g.h[t].clone(),
                    p: &st.a + &st.gx - l * (&st.d + &st.gp),
                    q: &st.c + l,
                    qx: Mat::zeros(st.a.nrows(), g.f[t].ncols()),
                    r: &st.hx + &self.w_mean - l * (&st.hp + &self.xi_mean),
                }
            })
            .collect();
        let init = match &self.init {
            BeliefInit::FromPrevious { constant, coef, .. } => ControllerInit::FromPrevious { constant: constant.clone(), coef: coef.clone() },
            BeliefInit::Stationary { x_hat0, .. } => ControllerInit::Stationary { coef: Mat::identity(x_hat0.len(), x_hat0.len()) },
        };
        Controller { init, stages }
    }
}

/// One predictor step: gain `A Sigma D' S^+` and the next error covariance.
pub(crate) fn kalman_step(a: &Mat, d: &Mat, sigma: &Mat, xi_cov: &Mat, w_cov: &Mat) -> (Mat, Mat) {
    let s = d * sigma * d.transpose() + xi_cov;
    let s_pinv = linalg::pinv(&linalg::sym(&s));
    let sd = sigma * d.transpose();
    let gain = a * &sd * &s_pinv;
    let post = sigma - &sd * &s_pinv * sd.transpose();
    let next = linalg::sym(&(a * post * a.transpose() + w_cov));
    (gain, next)
}

/// A computed SEBEU profile, finite or stationary.
#[derive(Debug, Clone)]
pub enum SebeuProfile {
    Finite(SebeuFinite),
    Stationary(SebeuStationary),
}

impl SebeuProfile {
    pub fn belief(&self) -> &BeliefModel {
        match self {
            SebeuProfile::Finite(p) => &p.belief,
            SebeuProfile::Stationary(p) => &p.belief,
        }
    }

    pub fn gains(&self) -> &[GroupGains] {
        match self {
            SebeuProfile::Finite(p) => &p.gains,
            SebeuProfile::Stationary(p) => &p.gains,
        }
    }

    pub fn controllers(&self) -> Vec<Controller> {
        self.gains().iter().map(|g| self.belief().controller(g)).collect()
    }

    /// `Some(T)` for finite profiles.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            SebeuProfile::Finite(p) => Some(p.horizon()),
            SebeuProfile::Stationary(_) => None,
        }
    }
}

/// Dispatches on the spec's horizon.
pub fn build_sebeu(spec: &crate::model::LqGameSpec) -> crate::error::Result<SebeuProfile> {
    match spec.horizon_len() {
        Some(_) => build_sebeu_finite(spec).map(SebeuProfile::Finite),
        None => build_sebeu_infinite_stationary(spec, &FixedPointOptions::default()).map(SebeuProfile::Stationary),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kalman_step_scalar() {
        // a = 1, d = 1, sigma = 1, var xi = 1, var w = 1:
        // gain = 1/2, posterior 1/2, next 3/2.
        let s = |x: f64| Mat::from_element(1, 1, x);
        let (gain, next) = kalman_step(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &s(1.0));
        assert!((gain[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((next[(0, 0)] - 1.5).abs() < 1e-15);
    }
}
