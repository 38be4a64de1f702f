//! Finite-dimensional affine controllers driven by the environment history.
//!
//! Every strategy the crate evaluates has the form
//! `u_t = F_t x_t + J_t z_t + h_t` with an internal state
//! `z_{t+1} = P_t z_t + Q_t y_t + Qx_t x_t + r_t`. The SEBEU strategy uses
//! the belief model's Kalman predictor as `z`; history-dependent deviations
//! (own states and past environment values) fit the same template.

use crate::linalg::{Mat, Vector};

/// How the controller state is initialized before stage 0.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerInit {
    /// `z_0 = constant + coef * y_{-1}`.
    FromPrevious { constant: Vector, coef: Mat },
    /// `z_0` is the shared stationary estimate primitive `X̂_{0|-1}`
    /// mapped through `coef` (used by steady-state initializations).
    Stationary { coef: Mat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStage {
    pub f: Mat,
    pub j: Mat,
    pub h: Vector,
    pub p: Mat,
    pub q: Mat,
    pub qx: Mat,
    pub r: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub init: ControllerInit,
    /// One stage per time step; the last one repeats beyond its end.
    pub stages: Vec<ControllerStage>,
}

impl Controller {
    pub fn stage(&self, t: usize) -> &ControllerStage {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    pub fn state_dim(&self) -> usize {
        self.stages[0].p.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.stages[0].f.nrows()
    }

    /// Pure state feedback `u_t = F_t x_t + h_t` (no internal state).
    pub fn state_feedback(f: Vec<Mat>, h: Vec<Vector>, env_dim: usize) -> Controller {
        let stages = f
            .into_iter()
            .zip(h)
            .map(|(f, h)| {
                let (m, n) = f.shape();
                ControllerStage {
                    f,
                    j: Mat::zeros(m, 0),
                    h,
                    p: Mat::zeros(0, 0),
                    q: Mat::zeros(0, env_dim),
                    qx: Mat::zeros(0, n),
                    r: Vector::zeros(0),
                }
            })
            .collect();
        Controller { init: ControllerInit::FromPrevious { constant: Vector::zeros(0), coef: Mat::zeros(0, env_dim) }, stages }
    }

    /// The control at stage `t` written as an explicit affine function of
    /// the history `(y_{-1}, ..., y_{t-1})` plus the feedback `F_t x_t`, when
    /// the controller ignores its own past states (`Qx = 0`) and starts
    /// from `y_{-1}`. Returns the coefficient of each past `y` and the constant.
    pub fn history_form(&self, t: usize) -> Option<(Vec<Mat>, Vector)> {
        let ControllerInit::FromPrevious { constant, coef } = &self.init else {
            return None;
        };
        if (0..t).any(|s| self.stage(s).qx.amax() > 0.0) {
            return None;
        }
        // z_s = c_s + sum_j M_{s,j} y_{j-1}
        let mut c = constant.clone();
        let mut ms = vec![coef.clone()];
        for s in 0..t {
            let st = self.stage(s);
            ms = ms.into_iter().map(|m| &st.p * m).collect();
            ms.push(st.q.clone());
            c = &st.p * c + &st.r;
        }
        let st = self.stage(t);
        Some((ms.iter().map(|m| &st.j * m).collect(), &st.j * c + &st.h))
    }
}
