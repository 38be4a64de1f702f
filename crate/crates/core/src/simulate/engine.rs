//! One closed-loop recursion shared by exact moment propagation (values are
//! [`Affine`] maps of the primitives) and sampling (values are vectors).

use super::controller::{Controller, ControllerInit};
use super::gaussian::Affine;
use crate::linalg::{Mat, Vector};
use crate::model::LqGameSpec;
use crate::sebeu_lq::BeliefModel;

/// A linear signal: either a realized vector or an affine map of the
/// primitives.
pub trait Signal: Clone {
    fn map(&self, m: &Mat) -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn plus_const(&self, v: &Vector) -> Self;
    fn slice(&self, start: usize, len: usize) -> Self;
    fn concat(parts: &[&Self]) -> Self;
}

impl Signal for Vector {
    fn map(&self, m: &Mat) -> Self {
        m * self
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn plus_const(&self, v: &Vector) -> Self {
        self + v
    }
    fn slice(&self, start: usize, len: usize) -> Self {
        self.rows(start, len).into_owned()
    }
    fn concat(parts: &[&Self]) -> Self {
        crate::linalg::vstack_vec(parts)
    }
}

impl Signal for Affine {
    fn map(&self, m: &Mat) -> Self {
        Affine::map(self, m)
    }
    fn plus(&self, other: &Self) -> Self {
        self.add(other)
    }
    fn plus_const(&self, v: &Vector) -> Self {
        self.add_const(v)
    }
    fn slice(&self, start: usize, len: usize) -> Self {
        self.rows(start, len)
    }
    fn concat(parts: &[&Self]) -> Self {
        Affine::stack(parts)
    }
}

/// Initial primitives of a run.
#[derive(Debug, Clone)]
pub struct InitSignals<S> {
    pub x0: S,
    pub y_prev: S,
    /// Shared stationary estimate, required by stationary controllers.
    pub x_hat0: Option<S>,
}

/// Trajectory of a run over `stages` steps.
#[derive(Debug, Clone)]
pub struct Run<S> {
    /// `X_0, ..., X_T`.
    pub x: Vec<S>,
    /// `y_0, ..., y_{T-1}`.
    pub y: Vec<S>,
    /// `u[t][g]`.
    pub u: Vec<Vec<S>>,
}

fn controller_state0<S: Signal>(c: &Controller, init: &InitSignals<S>) -> S {
    match &c.init {
        ControllerInit::FromPrevious { constant, coef } => init.y_prev.map(coef).plus_const(constant),
        ControllerInit::Stationary { coef } => init.x_hat0.as_ref().expect("stationary controller needs the shared estimate").map(coef),
    }
}

/// Actual closed loop of the game when group `g` runs `controllers[g]`.
/// `noise(t)` returns `(W_t, xi_t)`.
pub fn rollout<S: Signal>(
    spec: &LqGameSpec,
    controllers: &[Controller],
    init: &InitSignals<S>,
    stages: usize,
    mut noise: impl FnMut(usize) -> (S, S),
) -> Run<S> {
    let n0 = spec.env_state_dim;
    let mut z: Vec<S> = controllers.iter().map(|c| controller_state0(c, init)).collect();
    let mut run = Run { x: vec![init.x0.clone()], y: Vec::with_capacity(stages), u: Vec::with_capacity(stages) };
    for t in 0..stages {
        let x = run.x.last().expect("nonempty").clone();
        let env = spec.env_stage(t);
        let (w, xi) = noise(t);
        let xs: Vec<S> = (0..spec.groups.len()).map(|g| x.slice(spec.group_offset(g), spec.groups[g].n())).collect();
        let us: Vec<S> = controllers
            .iter()
            .enumerate()
            .map(|(g, c)| {
                let st = c.stage(t);
                xs[g].map(&st.f).plus(&z[g].map(&st.j)).plus_const(&st.h)
            })
            .collect();
        let mut y = xi;
        let mut x0_next = (n0 > 0).then(|| x.slice(0, n0).map(&env.a0).plus(&w.slice(0, n0)));
        if n0 > 0 {
            y = y.plus(&x.slice(0, n0).map(&env.d));
        }
        for g in 0..spec.groups.len() {
            let wg = spec.weight(g);
            y = y.plus(&us[g].map(&(&env.e1[g] * wg))).plus(&xs[g].map(&(&env.e2[g] * wg)));
            if let Some(x0n) = x0_next.as_mut() {
                *x0n = x0n.plus(&us[g].map(&(&env.b1[g] * wg))).plus(&xs[g].map(&(&env.b2[g] * wg)));
            }
        }
        let mut parts: Vec<S> = Vec::with_capacity(spec.groups.len() + 1);
        if let Some(x0n) = x0_next {
            parts.push(x0n);
        }
        for (g, grp) in spec.groups.iter().enumerate() {
            let st = grp.stage(t);
            let next = xs[g].map(&st.a).plus(&us[g].map(&st.b)).plus(&y.map(&st.c)).plus(&w.slice(spec.group_offset(g), grp.n()));
            parts.push(next);
        }
        let refs: Vec<&S> = parts.iter().collect();
        run.x.push(S::concat(&refs));
        for (g, c) in controllers.iter().enumerate() {
            let st = c.stage(t);
            z[g] = z[g].map(&st.p).plus(&y.map(&st.q)).plus(&xs[g].map(&st.qx)).plus_const(&st.r);
        }
        run.y.push(y);
        run.u.push(us);
    }
    run
}

/// The environment as the belief model describes it: the law every DM
/// optimizes against.
pub fn belief_rollout<S: Signal>(
    belief: &BeliefModel,
    init: &InitSignals<S>,
    stages: usize,
    mut noise: impl FnMut(usize) -> (S, S),
) -> Vec<S> {
    let mut x = init.x0.clone();
    let mut xh = match (&belief.init, &init.x_hat0) {
        (crate::sebeu_lq::BeliefInit::Stationary { .. }, Some(xh)) => xh.clone(),
        (crate::sebeu_lq::BeliefInit::FromPrevious { constant, coef, .. }, _) => init.y_prev.map(coef).plus_const(constant),
        (crate::sebeu_lq::BeliefInit::Stationary { .. }, None) => panic!("stationary belief needs the shared estimate"),
    };
    let mut ys = Vec::with_capacity(stages);
    for t in 0..stages {
        let st = belief.stage(t);
        let (w, xi) = noise(t);
        let y = x.map(&st.d).plus(&xh.map(&st.gp)).plus_const(&st.hp).plus(&xi);
        let x_next = x.map(&st.a).plus(&xh.map(&st.gx)).plus_const(&st.hx).plus(&y.map(&st.c)).plus(&w);
        let l = &st.gain;
        let p = &st.a + &st.gx - l * (&st.d + &st.gp);
        let r = &st.hx + &belief.w_mean - l * (&st.hp + &belief.xi_mean);
        xh = xh.map(&p).plus(&y.map(&(&st.c + l))).plus_const(&r);
        x = x_next;
        ys.push(y);
    }
    ys
}
