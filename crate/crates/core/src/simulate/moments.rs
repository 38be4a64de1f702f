//! Exact first and second moments of closed loops and the distributional
//! consistency check between the actual game and the belief model.

use serde::Serialize;

use super::controller::Controller;
use super::engine::{belief_rollout, rollout, InitSignals, Run};
use super::gaussian::{expect_bilinear, expect_quadratic, Affine, GaussianLaw, PrimitiveLayout};
use crate::linalg::{self, Mat, Vector};
use crate::model::LqGameSpec;
use crate::sebeu_lq::{BeliefInit, BeliefModel};

/// Tolerance of the finite-horizon consistency check.
pub const CONSISTENCY_TOL_FINITE: f64 = 1e-8;
/// Tolerance of the stationary consistency check.
pub const CONSISTENCY_TOL_STATIONARY: f64 = 1e-7;

/// Law of the initial condition of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum StartLaw {
    /// `(X_0, y_{-1})` jointly Gaussian as declared in the spec.
    Spec,
    /// Steady state of a stationary profile: `Xhat_0 ~ N(x_hat0, theta - sigma)`
    /// and an independent estimation error `N(0, sigma)`.
    Stationary { x_hat0: Vector, sigma: Mat, theta: Mat },
}

impl StartLaw {
    pub fn of_belief(belief: &BeliefModel) -> StartLaw {
        match &belief.init {
            BeliefInit::FromPrevious { .. } => StartLaw::Spec,
            BeliefInit::Stationary { x_hat0, sigma, theta } => StartLaw::Stationary { x_hat0: x_hat0.clone(), sigma: sigma.clone(), theta: theta.clone() },
        }
    }
}

/// All primitives of a run of `stages` steps, registered up front.
#[derive(Debug, Clone)]
pub struct Primitives {
    pub layout: PrimitiveLayout,
    init: Vec<usize>,
    noise: Vec<(usize, usize)>,
    start: StartLaw,
    nx: usize,
    p: usize,
    y_prev_mean: Vector,
}

impl Primitives {
    pub fn new(spec: &LqGameSpec, start: &StartLaw, stages: usize) -> Primitives {
        let nz = &spec.noise;
        let (nx, p) = (spec.state_dim(), spec.env_dim);
        let mut layout = PrimitiveLayout::new();
        let init = match start {
            StartLaw::Spec => {
                let mut cov = Mat::zeros(nx + p, nx + p);
                cov.view_mut((0, 0), (nx, nx)).copy_from(&nz.x0_cov);
                cov.view_mut((nx, nx), (p, p)).copy_from(&nz.y_prev_cov);
                cov.view_mut((nx, 0), (p, nx)).copy_from(&nz.y_prev_x0_cov);
                cov.view_mut((0, nx), (nx, p)).copy_from(&nz.y_prev_x0_cov.transpose());
                let mean = linalg::vstack_vec(&[&nz.x0_mean, &nz.y_prev_mean]);
                vec![layout.push("x0_y_prev", GaussianLaw { mean, cov })]
            }
            StartLaw::Stationary { x_hat0, sigma, theta } => vec![
                layout.push("x_hat0", GaussianLaw { mean: x_hat0.clone(), cov: linalg::sym(&(theta - sigma)) }),
                layout.push("estimation_error0", GaussianLaw { mean: Vector::zeros(nx), cov: sigma.clone() }),
            ],
        };
        let noise = (0..stages)
            .map(|t| {
                let w = layout.push(format!("w{t}"), GaussianLaw { mean: nz.w_mean.clone(), cov: nz.w_cov.clone() });
                let xi = layout.push(format!("xi{t}"), GaussianLaw { mean: nz.xi_mean.clone(), cov: nz.xi_cov.clone() });
                (w, xi)
            })
            .collect();
        Primitives { layout, init, noise, start: start.clone(), nx, p, y_prev_mean: nz.y_prev_mean.clone() }
    }

    pub fn stages(&self) -> usize {
        self.noise.len()
    }

    /// Initial signals as affine maps of the primitives.
    pub fn init_affine(&self) -> InitSignals<Affine> {
        match self.start {
            StartLaw::Spec => {
                let joint = self.layout.block(self.init[0]);
                InitSignals { x0: joint.rows(0, self.nx), y_prev: joint.rows(self.nx, self.p), x_hat0: None }
            }
            StartLaw::Stationary { .. } => {
                let xh = self.layout.block(self.init[0]);
                let err = self.layout.block(self.init[1]);
                InitSignals {
                    x0: xh.add(&err),
                    y_prev: Affine::constant(self.y_prev_mean.clone(), self.layout.dim()),
                    x_hat0: Some(xh),
                }
            }
        }
    }

    /// Initial signals realized from standard-normal coordinates `z`.
    pub fn init_sample(&self, z: &[f64]) -> InitSignals<Vector> {
        match self.start {
            StartLaw::Spec => {
                let joint = self.layout.realize(self.init[0], z);
                InitSignals { x0: joint.rows(0, self.nx).into_owned(), y_prev: joint.rows(self.nx, self.p).into_owned(), x_hat0: None }
            }
            StartLaw::Stationary { .. } => {
                let xh = self.layout.realize(self.init[0], z);
                let err = self.layout.realize(self.init[1], z);
                InitSignals { x0: &xh + err, y_prev: self.y_prev_mean.clone(), x_hat0: Some(xh) }
            }
        }
    }

    pub fn noise_affine(&self, t: usize) -> (Affine, Affine) {
        let (w, xi) = self.noise[t];
        (self.layout.block(w), self.layout.block(xi))
    }

    pub fn noise_sample(&self, t: usize, z: &[f64]) -> (Vector, Vector) {
        let (w, xi) = self.noise[t];
        (self.layout.realize(w, z), self.layout.realize(xi, z))
    }
}

/// Exact moments of the actual closed loop.
pub fn propagate_moments(spec: &LqGameSpec, controllers: &[Controller], start: &StartLaw, stages: usize) -> Run<Affine> {
    let prims = Primitives::new(spec, start, stages);
    rollout(spec, controllers, &prims.init_affine(), stages, |t| prims.noise_affine(t))
}

/// Exact moments of the environment under the belief model.
pub fn belief_moments(spec: &LqGameSpec, belief: &BeliefModel, stages: usize) -> Vec<Affine> {
    let prims = Primitives::new(spec, &StartLaw::of_belief(belief), stages);
    belief_rollout(belief, &prims.init_affine(), stages, |t| prims.noise_affine(t))
}

/// Expected discounted cost of group `g` (its members' average state and
/// control) over the run. The terminal weight is added when the run covers
/// the spec's whole finite horizon.
pub fn expected_cost(spec: &LqGameSpec, run: &Run<Affine>, g: usize) -> f64 {
    let grp = &spec.groups[g];
    let (off, n) = (spec.group_offset(g), grp.n());
    let mut total = 0.0;
    let mut disc = 1.0;
    for (t, (y, us)) in run.y.iter().zip(&run.u).enumerate() {
        let st = grp.stage(t);
        let x = run.x[t].rows(off, n);
        let u = &us[g];
        let stage = expect_quadratic(&x, &st.q) + expect_quadratic(u, &st.r) + 2.0 * (expect_bilinear(y, &st.k, u) + expect_bilinear(y, &st.l, &x));
        total += disc * stage;
        disc *= grp.beta;
    }
    let stages = run.y.len();
    if let (Some(qt), Some(h)) = (&grp.q_terminal, spec.horizon_len()) {
        if stages == h {
            total += disc * expect_quadratic(&run.x[stages].rows(off, n), qt);
        }
    }
    total
}

/// Mean and covariance of `(y_0, ..., y_{T-1})` stacked.
pub fn stacked_law(ys: &[Affine]) -> GaussianLaw {
    let refs: Vec<&Affine> = ys.iter().collect();
    Affine::stack(&refs).law()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub stages: usize,
    pub mean_gap: f64,
    pub cov_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the environment law induced by `controllers` in the actual game
/// with the law of the belief model, over `stages` steps. Both routes share
/// the same primitives, so means and all covariances (every lag inside the
/// window) are compared entrywise.
pub fn consistency_check(spec: &LqGameSpec, belief: &BeliefModel, controllers: &[Controller], stages: usize, tolerance: f64) -> ConsistencyReport {
    let start = StartLaw::of_belief(belief);
    let actual = stacked_law(&propagate_moments(spec, controllers, &start, stages).y);
    let model = stacked_law(&belief_moments(spec, belief, stages));
    let mean_gap = (&actual.mean - &model.mean).amax();
    let cov_gap = (&actual.cov - &model.cov).amax();
    ConsistencyReport { stages, mean_gap, cov_gap, tolerance, passed: mean_gap <= tolerance && cov_gap <= tolerance }
}

/// Largest change over time of the mean, covariance and lag-one
/// covariance of `y_t` and of `X_t`.
pub fn stationarity_drift(run: &Run<Affine>) -> f64 {
    let mut drift: f64 = 0.0;
    let y0 = &run.y[0];
    let x0 = &run.x[0];
    let lag0 = run.y.get(1).map(|y1| y0.cross_cov(y1));
    for t in 1..run.y.len() {
        drift = drift.max((run.y[t].mean() - y0.mean()).amax());
        drift = drift.max((run.y[t].cov() - y0.cov()).amax());
        drift = drift.max((run.x[t].mean() - x0.mean()).amax());
        drift = drift.max((run.x[t].cov() - x0.cov()).amax());
        if let (Some(l0), Some(next)) = (&lag0, run.y.get(t + 1)) {
            drift = drift.max((run.y[t].cross_cov(next) - l0).amax());
        }
    }
    drift
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use crate::sebeu_lq::{build_sebeu_finite, build_sebeu_infinite_stationary, FixedPointOptions};

    #[test]
    fn example2_environment_is_centered() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 1);
        let prof = build_sebeu_finite(&spec).unwrap();
        let run = propagate_moments(&spec, &prof.controllers(), &StartLaw::Spec, 2);
        assert!(run.y.iter().all(|y| y.mean().amax() < 1e-15));
    }

    #[test]
    fn example2_consistency() {
        for n in [1, 3, 50] {
            let spec = scenarios::example2(&scenarios::Example2Params::unit(), n);
            let prof = build_sebeu_finite(&spec).unwrap();
            let rep = consistency_check(&spec, &prof.belief, &prof.controllers(), 2, CONSISTENCY_TOL_FINITE);
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn example2_cost_by_hand() {
        // Without K the DM is a plain LQR: cost = M0 var(x0) + M1 var(w0) + M2 var(w1)
        // with the Riccati ladder M2 = 1, M1 = 1.5, M0 = 1.6, i.e. 4.1.
        let mut spec = scenarios::example2(&scenarios::Example2Params::unit(), 1);
        spec.env[0].e1[0].fill(0.0);
        spec.groups[0].stages[0].k.fill(0.0);
        let prof = build_sebeu_finite(&spec).unwrap();
        let run = propagate_moments(&spec, &prof.controllers(), &StartLaw::Spec, 2);
        let cost = expected_cost(&spec, &run, 0);
        assert!((cost - 4.1).abs() < 1e-12, "{cost}");
    }

    #[test]
    fn perturbed_gain_breaks_consistency() {
        let spec = scenarios::random_weakly_coupled(3, &scenarios::RandomSpecConfig::finite(4));
        let prof = build_sebeu_finite(&spec).unwrap();
        let mut ctrls = prof.controllers();
        ctrls[0].stages[1].j[(0, 0)] += 0.1;
        let rep = consistency_check(&spec, &prof.belief, &ctrls, 4, CONSISTENCY_TOL_FINITE);
        assert!(!rep.passed && rep.mean_gap.max(rep.cov_gap) > 1e-4, "{rep:?}");
    }

    #[test]
    fn stationary_profile_is_stationary_and_consistent() {
        for spec in [scenarios::scalar_stationary(0.1), scenarios::two_dm_stationary(0.1)] {
            let prof = build_sebeu_infinite_stationary(&spec, &FixedPointOptions::default()).unwrap();
            let ctrls: Vec<Controller> = prof.gains.iter().map(|g| prof.belief.controller(g)).collect();
            let run = propagate_moments(&spec, &ctrls, &StartLaw::of_belief(&prof.belief), 50);
            assert!(stationarity_drift(&run) < 1e-7, "{}", stationarity_drift(&run));
            let rep = consistency_check(&spec, &prof.belief, &ctrls, 11, CONSISTENCY_TOL_STATIONARY);
            assert!(rep.passed, "{rep:?}");
        }
    }
}
