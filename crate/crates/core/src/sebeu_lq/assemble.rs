use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr_exo::{FiniteExoPolicy, InfiniteExoPolicy};
use crate::model::LqGameSpec;

/// How per-group control terms `M_g` enter the environment equation and the
/// stacked state equation at stage `t`: returns
/// `(sum_g w_g E1_g M_g, [sum_g w_g B1_g M_g; B_1 M_1; ...; B_G M_G])`
/// where `w_g = c_g / N`.
pub fn control_effect(spec: &LqGameSpec, t: usize, ms: &[Mat]) -> (Mat, Mat) {
    let k = ms[0].ncols();
    let env = spec.env_stage(t);
    let mut on_y = Mat::zeros(spec.env_dim, k);
    let mut on_x = Mat::zeros(spec.state_dim(), k);
    let n0 = spec.env_state_dim;
    for (g, m) in ms.iter().enumerate() {
        let w = spec.weight(g);
        on_y += &env.e1[g] * m * w;
        if n0 > 0 {
            let mut top = on_x.rows_mut(0, n0);
            top += &env.b1[g] * m * w;
        }
        let off = spec.group_offset(g);
        let grp = &spec.groups[g];
        on_x.rows_mut(off, grp.n()).copy_from(&(&grp.stage(t).b * m));
    }
    (on_y, on_x)
}

/// `D_t` (environment row) and `A_t` (stacked state transition) of the
/// closed loop when each group plays the state feedback `F_g`.
pub fn feedback_blocks(spec: &LqGameSpec, t: usize, f: &[&Mat]) -> (Mat, Mat, Mat) {
    let env = spec.env_stage(t);
    let dim = spec.state_dim();
    let n0 = spec.env_state_dim;
    let p = spec.env_dim;
    let mut d = Mat::zeros(p, dim);
    let mut a = Mat::zeros(dim, dim);
    let mut c = Mat::zeros(dim, p);
    if n0 > 0 {
        d.view_mut((0, 0), (p, n0)).copy_from(&env.d);
        a.view_mut((0, 0), (n0, n0)).copy_from(&env.a0);
    }
    for (g, grp) in spec.groups.iter().enumerate() {
        let st = grp.stage(t);
        let w = spec.weight(g);
        let (off, n) = (spec.group_offset(g), grp.n());
        d.view_mut((0, off), (p, n)).copy_from(&((&env.e1[g] * f[g] + &env.e2[g]) * w));
        if n0 > 0 {
            a.view_mut((0, off), (n0, n)).copy_from(&((&env.b1[g] * f[g] + &env.b2[g]) * w));
        }
        a.view_mut((off, off), (n, n)).copy_from(&(&st.a + &st.b * f[g]));
        c.view_mut((off, 0), (n, p)).copy_from(&st.c);
    }
    (d, a, c)
}

/// Vector form of the finite-horizon closed loop when every group plays
/// its exo-optimal response:
/// `y_t = D_t X_t + sum_k Gp_{t,k} E[y_k|Y_{t-1}] + Hp_t + xi_t` and
/// `X_{t+1} = A_t X_t + sum_k GX_{t,k} E[y_k|Y_{t-1}] + HX_t + C_t y_t + W_t`.
#[derive(Debug, Clone)]
pub struct ClosedLoopCoeffs {
    pub horizon: usize,
    pub d: Vec<Mat>,
    /// `gp[t][k - t]` for `t <= k < T`.
    pub gp: Vec<Vec<Mat>>,
    pub hp: Vec<Vector>,
    pub a: Vec<Mat>,
    pub gx: Vec<Vec<Mat>>,
    pub hx: Vec<Vector>,
    pub c: Vec<Mat>,
    pub xi_mean: Vector,
    pub w_mean: Vector,
}

impl ClosedLoopCoeffs {
    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }
    pub fn env_dim(&self) -> usize {
        self.d[0].nrows()
    }
}

pub fn assemble_closed_loop(spec: &LqGameSpec, policies: &[FiniteExoPolicy]) -> Result<ClosedLoopCoeffs> {
    let horizon = spec.horizon_len().ok_or_else(|| Error::Unsupported("finite-horizon assembly on an infinite spec".into()))?;
    if policies.len() != spec.groups.len() {
        return Err(Error::dim("policies", spec.groups.len(), policies.len()));
    }
    for (g, pol) in policies.iter().enumerate() {
        if pol.horizon() != horizon {
            return Err(Error::dim(format!("policy of group {g} (stages)"), horizon, pol.horizon()));
        }
        if pol.f[0].shape() != (spec.groups[g].m(), spec.groups[g].n()) {
            return Err(Error::dim(format!("policy of group {g} (F rows)"), spec.groups[g].m(), pol.f[0].nrows()));
        }
    }
    let mut out = ClosedLoopCoeffs {
        horizon,
        d: Vec::with_capacity(horizon),
        gp: Vec::with_capacity(horizon),
        hp: Vec::with_capacity(horizon),
        a: Vec::with_capacity(horizon),
        gx: Vec::with_capacity(horizon),
        hx: Vec::with_capacity(horizon),
        c: Vec::with_capacity(horizon),
        xi_mean: spec.noise.xi_mean.clone(),
        w_mean: spec.noise.w_mean.clone(),
    };
    for t in 0..horizon {
        let fs: Vec<&Mat> = policies.iter().map(|p| &p.f[t]).collect();
        let (d, a, c) = feedback_blocks(spec, t, &fs);
        out.d.push(d);
        out.a.push(a);
        out.c.push(c);
        let mut gp_row = Vec::with_capacity(horizon - t);
        let mut gx_row = Vec::with_capacity(horizon - t);
        for k in t..horizon {
            let ms: Vec<Mat> = policies.iter().map(|p| p.g(t, k).clone()).collect();
            let (gp, gx) = control_effect(spec, t, &ms);
            gp_row.push(gp);
            gx_row.push(gx);
        }
        out.gp.push(gp_row);
        out.gx.push(gx_row);
        let hs: Vec<Mat> = policies.iter().map(|p| linalg::col(&p.h[t])).collect();
        let (hp, hx) = control_effect(spec, t, &hs);
        out.hp.push(hp.column(0).into_owned());
        out.hx.push(hx.column(0).into_owned());
    }
    Ok(out)
}

/// Time-invariant vector form for the infinite horizon. The environment
/// gain families are kept in the groups' closed form.
#[derive(Debug, Clone)]
pub struct StationaryCoeffs {
    pub d: Mat,
    pub a: Mat,
    pub c: Mat,
    pub hp: Vector,
    pub hx: Vector,
    pub xi_mean: Vector,
    pub w_mean: Vector,
    pub policies: Vec<InfiniteExoPolicy>,
}

impl StationaryCoeffs {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn env_dim(&self) -> usize {
        self.d.nrows()
    }

    /// `(Gp_n, GX_n)` for a given lookahead `n`.
    pub fn g_n(&self, spec: &LqGameSpec, n: usize) -> (Mat, Mat) {
        let ms: Vec<Mat> = self.policies.iter().map(|p| p.g_n(n)).collect();
        control_effect(spec, 0, &ms)
    }
}

pub fn assemble_stationary(spec: &LqGameSpec, policies: &[InfiniteExoPolicy]) -> Result<StationaryCoeffs> {
    if spec.horizon_len().is_some() {
        return Err(Error::Unsupported("stationary assembly on a finite spec".into()));
    }
    if policies.len() != spec.groups.len() {
        return Err(Error::dim("policies", spec.groups.len(), policies.len()));
    }
    let fs: Vec<&Mat> = policies.iter().map(|p| &p.f).collect();
    let (d, a, c) = feedback_blocks(spec, 0, &fs);
    let hs: Vec<Mat> = policies.iter().map(|p| linalg::col(&p.h)).collect();
    let (hp, hx) = control_effect(spec, 0, &hs);
    Ok(StationaryCoeffs {
        d,
        a,
        c,
        hp: hp.column(0).into_owned(),
        hx: hx.column(0).into_owned(),
        xi_mean: spec.noise.xi_mean.clone(),
        w_mean: spec.noise.w_mean.clone(),
        policies: policies.to_vec(),
    })
}
