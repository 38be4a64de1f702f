use super::{FiniteExoPolicy, InfiniteExoPolicy};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{DmGroup, LqGameSpec};
use crate::simulate::gaussian::{conditional_mean, expect_bilinear, expect_quadratic, Affine, GaussianLaw, PrimitiveLayout};

/// Law of one individual DM's own primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnNoise {
    pub x0: GaussianLaw,
    /// Law of each `w_t` (i.i.d. over time).
    pub w: GaussianLaw,
}

impl OwnNoise {
    /// Law of one member of group `g`. Group blocks hold the law of the
    /// members' average, so the individual covariance is `count` times it.
    pub fn member_of(spec: &LqGameSpec, g: usize) -> OwnNoise {
        let off = spec.group_offset(g);
        let n = spec.groups[g].n();
        let c = spec.groups[g].count as f64;
        let nz = &spec.noise;
        OwnNoise {
            x0: GaussianLaw {
                mean: nz.x0_mean.rows(off, n).into_owned(),
                cov: nz.x0_cov.view((off, off), (n, n)).into_owned() * c,
            },
            w: GaussianLaw { mean: nz.w_mean.rows(off, n).into_owned(), cov: nz.w_cov.view((off, off), (n, n)).into_owned() * c },
        }
    }
}

/// Gaussian belief about the environment sequence `(z_{-1}, z_0, z_1, ...)`
/// over a finite window, stacked in that order. It is independent of the
/// DM's own primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoEnvLaw {
    pub env_dim: usize,
    pub law: GaussianLaw,
}

impl ExoEnvLaw {
    pub fn new(env_dim: usize, law: GaussianLaw) -> Result<Self> {
        if env_dim == 0 || !law.dim().is_multiple_of(env_dim) || law.dim() < env_dim {
            return Err(Error::dim("environment law", env_dim, law.dim()));
        }
        Ok(ExoEnvLaw { env_dim, law })
    }

    /// Number of stages `t >= 0` covered by the window.
    pub fn stages(&self) -> usize {
        self.law.dim() / self.env_dim - 1
    }

    /// Restriction to `(z_{-1}, ..., z_{len-1})`.
    pub fn truncated(&self, len: usize) -> ExoEnvLaw {
        let d = self.env_dim * (len + 1);
        ExoEnvLaw {
            env_dim: self.env_dim,
            law: GaussianLaw { mean: self.law.mean.rows(0, d).into_owned(), cov: self.law.cov.view((0, 0), (d, d)).into_owned() },
        }
    }
}

/// Gains of one stage of a generic exo policy:
/// `u_k = F x_k + sum_j G[j] E[z_{k+j} | Z_{k-1}] + h`.
struct StagePolicy<'a> {
    f: &'a Mat,
    g: Vec<&'a Mat>,
    h: &'a Vector,
}

/// Rolls the DM's state forward against the environment window and returns
/// the per-stage expected costs (undiscounted) and the final state.
fn rollout<'a>(
    dm: &DmGroup,
    own: &OwnNoise,
    env: &ExoEnvLaw,
    stages: usize,
    policy: impl Fn(usize) -> StagePolicy<'a>,
) -> (Vec<f64>, Affine) {
    let p = env.env_dim;
    let mut lay = PrimitiveLayout::new();
    let x0 = lay.push("x0", own.x0.clone());
    let w: Vec<usize> = (0..stages).map(|t| lay.push(format!("w{t}"), own.w.clone())).collect();
    let zb = lay.push("z", env.law.clone());
    let zs = lay.block(zb);
    let z = |t: usize| zs.rows(p * (t + 1), p);
    let window = env.stages();

    let mut x = lay.block(x0);
    let mut costs = Vec::with_capacity(stages);
    for k in 0..stages {
        let st = dm.stage(k);
        let pol = policy(k);
        let mut u = x.map(pol.f).add_const(pol.h);
        let look = pol.g.len().min(window - k);
        if look > 0 {
            let past = zs.rows(0, p * (k + 1));
            let future = zs.rows(p * (k + 1), p * look);
            let fc = conditional_mean(&future, &past);
            for (j, g) in pol.g.iter().take(look).enumerate() {
                u.add_mapped(g, &fc.rows(p * j, p));
            }
        }
        let zk = z(k);
        let c = expect_quadratic(&x, &st.q) + expect_quadratic(&u, &st.r) + 2.0 * (expect_bilinear(&zk, &st.k, &u) + expect_bilinear(&zk, &st.l, &x));
        costs.push(c);
        let mut next = x.map(&st.a);
        next.add_mapped(&st.b, &u);
        next.add_mapped(&st.c, &zk);
        x = next.add(&lay.block(w[k]));
    }
    (costs, x)
}

/// Exact expected discounted cost of a finite-horizon exo policy against the
/// believed environment law, by moment propagation.
pub fn eval_exo_cost(policy: &FiniteExoPolicy, dm: &DmGroup, own: &OwnNoise, env: &ExoEnvLaw) -> Result<f64> {
    let horizon = policy.horizon();
    if env.stages() < horizon {
        return Err(Error::InvalidValue {
            field: "env_law".into(),
            message: format!("environment window covers {} stages, the policy needs {horizon}", env.stages()),
        });
    }
    let env = env.truncated(horizon);
    let (costs, x_final) = rollout(dm, own, &env, horizon, |k| StagePolicy {
        f: &policy.f[k],
        g: policy.g[k].iter().collect(),
        h: &policy.h[k],
    });
    let qt = dm.q_terminal.as_ref().ok_or_else(|| Error::InvalidValue {
        field: "Q_T".into(),
        message: "finite-horizon cost needs a terminal weight".into(),
    })?;
    let mut total = 0.0;
    let mut disc = 1.0;
    for c in costs {
        total += disc * c;
        disc *= dm.beta;
    }
    Ok(total + disc * expect_quadratic(&x_final, qt))
}

/// Required bound on the discounted cost tail relative to the running total.
pub const COST_TAIL_TOL: f64 = 1e-10;
/// Stage budget of the infinite-horizon evaluation.
pub const COST_STAGE_BUDGET: usize = 1_000_000;

/// Time-invariant linear-Gaussian environment belief for the stationary case:
/// `s_{t+1} = A s_t + v_t` and `z_t = C s_t + e_t` with `(v_t, e_t)` i.i.d.
/// Gaussian and possibly correlated. What the DM knows before stage 0 is
/// summarized by the prior estimate `s_hat0` (itself random) and the
/// covariance `err0_cov` of the independent estimation error `s_0 - s_hat0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStateSpace {
    pub a: Mat,
    pub c: Mat,
    /// Law of the stacked `(v_t, e_t)`.
    pub noise: GaussianLaw,
    pub s_hat0: GaussianLaw,
    pub err0_cov: Mat,
}

impl EnvStateSpace {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn env_dim(&self) -> usize {
        self.c.nrows()
    }

    /// An i.i.d. environment `z_t ~ N(mean, cov)`.
    pub fn iid(law: GaussianLaw) -> Self {
        let p = law.dim();
        EnvStateSpace {
            a: Mat::zeros(0, 0),
            c: Mat::zeros(p, 0),
            noise: law,
            s_hat0: GaussianLaw::degenerate(Vector::zeros(0)),
            err0_cov: Mat::zeros(0, 0),
        }
    }

    /// Moves the noise means into a constant state coordinate so that the
    /// remaining noise is centred.
    fn augmented(&self) -> EnvStateSpace {
        let (q, p) = (self.state_dim(), self.env_dim());
        let vbar = self.noise.mean.rows(0, q);
        let ebar = self.noise.mean.rows(q, p);
        let mut a = Mat::zeros(q + 1, q + 1);
        a.view_mut((0, 0), (q, q)).copy_from(&self.a);
        a.view_mut((0, q), (q, 1)).copy_from(&vbar);
        a[(q, q)] = 1.0;
        let mut c = Mat::zeros(p, q + 1);
        c.view_mut((0, 0), (p, q)).copy_from(&self.c);
        c.view_mut((0, q), (p, 1)).copy_from(&ebar);
        let mut cov = Mat::zeros(q + 1 + p, q + 1 + p);
        let src = &self.noise.cov;
        for (i, ii) in (0..q + p).map(|i| (i, if i < q { i } else { i + 1 })) {
            for (j, jj) in (0..q + p).map(|j| (j, if j < q { j } else { j + 1 })) {
                cov[(ii, jj)] = src[(i, j)];
            }
        }
        let mut hat_mean = Vector::zeros(q + 1);
        hat_mean.rows_mut(0, q).copy_from(&self.s_hat0.mean);
        hat_mean[q] = 1.0;
        let mut hat_cov = Mat::zeros(q + 1, q + 1);
        hat_cov.view_mut((0, 0), (q, q)).copy_from(&self.s_hat0.cov);
        let mut err = Mat::zeros(q + 1, q + 1);
        err.view_mut((0, 0), (q, q)).copy_from(&self.err0_cov);
        EnvStateSpace {
            a,
            c,
            noise: GaussianLaw { mean: Vector::zeros(q + 1 + p), cov },
            s_hat0: GaussianLaw { mean: hat_mean, cov: hat_cov },
            err0_cov: err,
        }
    }

    /// Law of the window `(z_{-1}, z_0, ..., z_{len-1})` when the prior
    /// estimate is deterministic; `z_{-1}` is then a degenerate zero vector
    /// carrying no information.
    pub fn window_law(&self, len: usize) -> Result<ExoEnvLaw> {
        if linalg::min_sym_eigenvalue(&self.s_hat0.cov) < 0.0 || self.s_hat0.cov.amax() > 0.0 {
            return Err(Error::Unsupported("window law needs a deterministic prior estimate".into()));
        }
        let (q, p) = (self.state_dim(), self.env_dim());
        let mut lay = PrimitiveLayout::new();
        let s0 = lay.push("s0", GaussianLaw { mean: self.s_hat0.mean.clone(), cov: self.err0_cov.clone() });
        let noises: Vec<usize> = (0..len).map(|t| lay.push(format!("n{t}"), self.noise.clone())).collect();
        let mut s = lay.block(s0);
        let mut parts = vec![Affine::zeros(p, lay.dim())];
        for nb in noises {
            let n = lay.block(nb);
            let mut z = s.map(&self.c);
            z = z.add(&n.rows(q, p));
            parts.push(z);
            s = s.map(&self.a).add(&n.rows(0, q));
        }
        let refs: Vec<&Affine> = parts.iter().collect();
        ExoEnvLaw::new(p, Affine::stack(&refs).law())
    }
}

/// `E[(Pa v + ca)' M (Pb v + cb)]` for `v ~ N(mean, cov)`.
fn bilinear(mean: &Vector, cov: &Mat, pa: &Mat, ca: &Vector, m: &Mat, pb: &Mat, cb: &Vector) -> f64 {
    let ma = pa * mean + ca;
    let mb = pb * mean + cb;
    ma.dot(&(m * &mb)) + (m * pb * cov * pa.transpose()).trace()
}

/// Exact expected discounted cost of a stationary exo policy against a
/// state-space environment belief. Forecasts come from the belief's Kalman
/// predictor; the sum is truncated once the geometric tail bound falls
/// below [`COST_TAIL_TOL`] of the running total.
pub fn eval_exo_cost_infinite(policy: &InfiniteExoPolicy, dm: &DmGroup, own: &OwnNoise, env: &EnvStateSpace) -> Result<f64> {
    let st = dm.stage(0);
    let env = env.augmented();
    let (n, q, p) = (dm.n(), env.state_dim(), env.env_dim());
    if p != st.k.nrows() {
        return Err(Error::dim("environment belief", st.k.nrows(), p));
    }
    // Sum over n of G_n C A^n, via y = right C A + generator y A.
    let tail = linalg::stein_general(&policy.generator, &env.a, &(&policy.right * &env.c * &env.a))?;
    let gamma = &policy.g0 * &env.c + &policy.left * tail;

    // Joint vector (x, s, s_hat) followed by the stage noise (w, v, e).
    let dz = n + 2 * q;
    let dn = n + q + p;
    let mut mean = Vector::zeros(dz);
    let mut cov = Mat::zeros(dz, dz);
    mean.rows_mut(0, n).copy_from(&own.x0.mean);
    mean.rows_mut(n, q).copy_from(&env.s_hat0.mean);
    mean.rows_mut(n + q, q).copy_from(&env.s_hat0.mean);
    cov.view_mut((0, 0), (n, n)).copy_from(&own.x0.cov);
    let hat = &env.s_hat0.cov;
    cov.view_mut((n, n), (q, q)).copy_from(&(hat + &env.err0_cov));
    cov.view_mut((n, n + q), (q, q)).copy_from(hat);
    cov.view_mut((n + q, n), (q, q)).copy_from(hat);
    cov.view_mut((n + q, n + q), (q, q)).copy_from(hat);
    let noise_mean = linalg::vstack_vec(&[&own.w.mean, &Vector::zeros(q + p)]);
    let noise_cov = linalg::block_diag(&[&own.w.cov, &env.noise.cov]);
    let (qv, sve, re) = (
        env.noise.cov.view((0, 0), (q, q)).into_owned(),
        env.noise.cov.view((0, q), (q, p)).into_owned(),
        env.noise.cov.view((q, q), (p, p)).into_owned(),
    );
    let mut pcov = env.err0_cov.clone();

    // Selectors on the combined vector (zeta, eta).
    let d = dz + dn;
    let sel = |off: usize, len: usize| {
        let mut m = Mat::zeros(len, d);
        for i in 0..len {
            m[(i, off + i)] = 1.0;
        }
        m
    };
    let px = sel(0, n);
    let ps = sel(n, q);
    let phat = sel(n + q, q);
    let pw = sel(dz, n);
    let pv = sel(dz + n, q);
    let pe = sel(dz + n + q, p);
    let pu = &policy.f * &px + &gamma * &phat;
    let pz = &env.c * &ps + &pe;
    let zero_n = Vector::zeros(n);
    let zero_p = Vector::zeros(p);

    let mut total = 0.0;
    let mut disc = 1.0;
    let mut recent = 0.0f64;
    for t in 0..COST_STAGE_BUDGET {
        let full_mean = linalg::vstack_vec(&[&mean, &noise_mean]);
        let full_cov = linalg::block_diag(&[&cov, &noise_cov]);
        let c = bilinear(&full_mean, &full_cov, &px, &zero_n, &st.q, &px, &zero_n)
            + bilinear(&full_mean, &full_cov, &pu, &policy.h, &st.r, &pu, &policy.h)
            + 2.0 * bilinear(&full_mean, &full_cov, &pz, &zero_p, &st.k, &pu, &policy.h)
            + 2.0 * bilinear(&full_mean, &full_cov, &pz, &zero_p, &st.l, &px, &zero_n);
        total += disc * c;
        recent = recent.max(c.abs());
        disc *= dm.beta;
        if t >= 10 && disc * recent / (1.0 - dm.beta) <= COST_TAIL_TOL * total.abs() {
            return Ok(total);
        }
        if t % 10 == 9 {
            recent = c.abs();
        }
        // Predictor gain of the belief model.
        let innov = linalg::sym(&(&env.c * &pcov * env.c.transpose() + &re));
        let gain = (&env.a * &pcov * env.c.transpose() + &sve) * linalg::pinv(&innov);
        pcov = linalg::sym(&(&env.a * &pcov * env.a.transpose() + &qv - &gain * &innov * gain.transpose()));
        let next_x = &st.a * &px + &st.b * &pu + &st.c * &pz + &pw;
        let next_s = &env.a * &ps + &pv;
        let next_hat = &env.a * &phat + &gain * (&pz - &env.c * &phat);
        let map = linalg::vstack(&[&next_x, &next_s, &next_hat]);
        let offset = linalg::vstack_vec(&[&(&st.b * &policy.h), &Vector::zeros(2 * q)]);
        mean = &map * &full_mean + offset;
        cov = linalg::sym(&(&map * &full_cov * map.transpose()));
        if !total.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence { what: "discounted cost truncation".into(), iterations: COST_STAGE_BUDGET, residual: total })
}
