use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::DmGroup;

/// Backward Riccati recursion of one DM over `[0, T]`.
#[derive(Debug, Clone)]
pub struct RiccatiLadder {
    /// `M_0, ..., M_T` with `M_T = Q_T`.
    pub m: Vec<Mat>,
    /// `S_k = R_k + beta B_k' M_{k+1} B_k`.
    pub s: Vec<Mat>,
    pub f: Vec<Mat>,
    /// `phi[k][t - k] = Phi_{k,t}` for `k <= t < T`.
    pub phi: Vec<Vec<Mat>>,
}

impl RiccatiLadder {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }
    pub fn phi(&self, k: usize, t: usize) -> &Mat {
        &self.phi[k][t - k]
    }
}

pub fn riccati_finite(dm: &DmGroup, horizon: usize) -> Result<RiccatiLadder> {
    let qt = dm.q_terminal.as_ref().ok_or_else(|| Error::InvalidValue {
        field: "Q_T".into(),
        message: "finite-horizon Riccati recursion needs a terminal weight".into(),
    })?;
    let beta = dm.beta;
    let n = dm.n();
    let mut m = vec![Mat::zeros(n, n); horizon + 1];
    let mut s = vec![Mat::zeros(0, 0); horizon];
    let mut f = vec![Mat::zeros(0, 0); horizon];
    m[horizon] = qt.clone();
    for k in (0..horizon).rev() {
        let st = dm.stage(k);
        let mb = &m[k + 1] * &st.b;
        let sk = linalg::sym(&(&st.r + st.b.transpose() * &mb * beta));
        let fk = -linalg::spd_solve(&sk, &(mb.transpose() * &st.a), &format!("S_{k}"))? * beta;
        // M_k = Q + beta A'(M - beta M B S^-1 B' M) A, written with F_k.
        let mk = &st.q + st.a.transpose() * (&m[k + 1] * &st.a + &mb * &fk) * beta;
        m[k] = linalg::sym(&mk);
        s[k] = sk;
        f[k] = fk;
    }
    let mut phi = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut row = Vec::with_capacity(horizon - k);
        row.push(Mat::identity(n, n));
        for t in k + 1..horizon {
            let st = dm.stage(t);
            let gamma = (&st.a + &st.b * &f[t]).transpose() * beta;
            let next = row.last().expect("nonempty") * gamma;
            row.push(next);
        }
        phi.push(row);
    }
    Ok(RiccatiLadder { m, s, f, phi })
}

/// Finite-horizon exo-optimal policy of one DM.
#[derive(Debug, Clone)]
pub struct FiniteExoPolicy {
    pub f: Vec<Mat>,
    /// `g[k][t - k] = G_{k,t}` (m x p) for `k <= t < T`.
    pub g: Vec<Vec<Mat>>,
    pub h: Vec<Vector>,
}

impl FiniteExoPolicy {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }
    pub fn g(&self, k: usize, t: usize) -> &Mat {
        &self.g[k][t - k]
    }
    /// Control given the state and the forecasts `zhat[t - k] = E[z_t | Z_{k-1}]`.
    pub fn control(&self, k: usize, x: &Vector, zhat: &[Vector]) -> Vector {
        let mut u = &self.f[k] * x + &self.h[k];
        for (j, z) in zhat.iter().enumerate() {
            u += &self.g[k][j] * z;
        }
        u
    }
}

/// Environment gains and offsets on top of a Riccati ladder. `w_mean` is
/// the (time-invariant) mean of the DM's own process noise.
pub fn exo_gains_finite(dm: &DmGroup, ladder: &RiccatiLadder, w_mean: &Vector) -> Result<FiniteExoPolicy> {
    let horizon = ladder.horizon();
    let beta = dm.beta;
    let mut g = Vec::with_capacity(horizon);
    let mut h = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let st = dm.stage(k);
        let name = format!("S_{k}");
        let sk = &ladder.s[k];
        let mut row = Vec::with_capacity(horizon - k);
        let diag = st.k.transpose() + st.b.transpose() * &ladder.m[k + 1] * &st.c * beta;
        row.push(-linalg::spd_solve(sk, &diag, &name)?);
        let left_bt = st.b.transpose() * beta;
        for t in k + 1..horizon {
            let su = dm.stage(t);
            let inner = ladder.phi(k, t) * &ladder.m[t + 1] * &su.c
                + ladder.phi(k, t - 1) * (ladder.f[t].transpose() * su.k.transpose() + su.l.transpose());
            row.push(-linalg::spd_solve(sk, &(&left_bt * inner), &name)?);
        }
        g.push(row);
        let mut acc = Vector::zeros(dm.n());
        for t in k..horizon {
            acc += ladder.phi(k, t) * (&ladder.m[t + 1] * w_mean);
        }
        h.push(-linalg::spd_solve_vec(sk, &(&left_bt * acc), &name)?);
    }
    Ok(FiniteExoPolicy { f: ladder.f.clone(), g, h })
}
