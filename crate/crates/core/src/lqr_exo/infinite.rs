use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::DmGroup;

/// Algebraic Riccati solution `M = Q + beta A'(M - beta M B S^-1 B' M) A`.
#[derive(Debug, Clone)]
pub struct AlgebraicRiccati {
    pub m: Mat,
    pub s: Mat,
    pub f: Mat,
    pub iterations: usize,
    /// Frobenius norm of the fixed-point residual at `m`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct RiccatiOptions {
    /// Weight on the new iterate; 1.0 is plain value iteration.
    pub damping: f64,
    pub rel_tol: f64,
    pub budget: usize,
    pub initial: Option<Mat>,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions { damping: 1.0, rel_tol: 1e-12, budget: 100_000, initial: None }
    }
}

/// Residual tolerance accepted after the iteration stops, relative to `|M|`.
pub const ARE_RESIDUAL_TOL: f64 = 1e-10;

fn riccati_step(dm: &DmGroup, m: &Mat) -> Result<(Mat, Mat, Mat)> {
    let st = dm.stage(0);
    let beta = dm.beta;
    let mb = m * &st.b;
    let s = linalg::sym(&(&st.r + st.b.transpose() * &mb * beta));
    let f = -linalg::spd_solve(&s, &(mb.transpose() * &st.a), "S")? * beta;
    let next = linalg::sym(&(&st.q + st.a.transpose() * (m * &st.a + &mb * &f) * beta));
    Ok((next, s, f))
}

pub fn riccati_algebraic(dm: &DmGroup, opts: &RiccatiOptions) -> Result<AlgebraicRiccati> {
    let st = dm.stage(0);
    let mut m = opts.initial.clone().unwrap_or_else(|| st.q.clone());
    let mut last = f64::INFINITY;
    for it in 1..=opts.budget {
        let (next, _, _) = riccati_step(dm, &m)?;
        let step = (&next - &m).norm();
        m = if opts.damping == 1.0 { next } else { &m * (1.0 - opts.damping) + next * opts.damping };
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NoConvergence { what: "algebraic Riccati iteration".into(), iterations: it, residual: f64::INFINITY });
        }
        last = step;
        if step <= opts.rel_tol * m.norm().max(1.0) {
            let (fixed, s, f) = riccati_step(dm, &m)?;
            let residual = (&fixed - &m).norm();
            if residual > ARE_RESIDUAL_TOL * m.norm().max(1.0) {
                return Err(Error::NoConvergence { what: "algebraic Riccati residual".into(), iterations: it, residual });
            }
            let rho = linalg::spectral_radius(&((&st.a + &st.b * &f) * dm.beta.sqrt()));
            if rho >= 1.0 {
                return Err(Error::InstabilityDetected { what: "sqrt(beta)(A + B F)".into(), spectral_radius: rho });
            }
            return Ok(AlgebraicRiccati { m, s, f, iterations: it, residual });
        }
    }
    Err(Error::NoConvergence { what: "algebraic Riccati iteration".into(), iterations: opts.budget, residual: last })
}

/// Infinite-horizon exo-optimal policy. The environment gains are
/// `G_0` and, for `n >= 1`, `G_n = left * generator^(n-1) * right` with
/// `generator = beta (A + B F)'`.
#[derive(Debug, Clone)]
pub struct InfiniteExoPolicy {
    pub f: Mat,
    pub g0: Mat,
    /// `-beta S^-1 B'`.
    pub left: Mat,
    pub generator: Mat,
    /// `generator M C + F'K' + L'`.
    pub right: Mat,
    /// `sum_n G_n` via the resolvent of the generator.
    pub g_sum: Mat,
    pub h: Vector,
}

impl InfiniteExoPolicy {
    pub fn g_n(&self, n: usize) -> Mat {
        if n == 0 {
            return self.g0.clone();
        }
        let mut acc = self.right.clone();
        for _ in 1..n {
            acc = &self.generator * acc;
        }
        &self.left * acc
    }
}

pub fn exo_gains_infinite(dm: &DmGroup, ric: &AlgebraicRiccati, w_mean: &Vector) -> Result<InfiniteExoPolicy> {
    let st = dm.stage(0);
    let beta = dm.beta;
    let n = dm.n();
    let g0 = -linalg::spd_solve(&ric.s, &(st.k.transpose() + st.b.transpose() * &ric.m * &st.c * beta), "S")?;
    let left = -linalg::spd_solve(&ric.s, &(st.b.transpose() * beta), "S")?;
    let generator = (&st.a + &st.b * &ric.f).transpose() * beta;
    let rho = linalg::spectral_radius(&generator);
    if rho >= 1.0 {
        return Err(Error::InstabilityDetected { what: "beta (A + B F)'".into(), spectral_radius: rho });
    }
    let right = &generator * &ric.m * &st.c + ric.f.transpose() * st.k.transpose() + st.l.transpose();
    let resolvent = (Mat::identity(n, n) - &generator)
        .lu()
        .try_inverse()
        .ok_or(Error::InstabilityDetected { what: "resolvent of beta (A + B F)'".into(), spectral_radius: rho })?;
    let g_sum = &g0 + &left * &resolvent * &right;
    let h = &left * (&resolvent * (&ric.m * w_mean));
    Ok(InfiniteExoPolicy { f: ric.f.clone(), g0, left, generator, right, g_sum, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr_exo::{exo_gains_finite, riccati_finite};
    use crate::model::Horizon;
    use crate::scenarios;

    fn scalar(beta: f64) -> DmGroup {
        let mut g = scenarios::scalar_stationary(0.0).groups[0].clone();
        g.stages[0].a = Mat::from_element(1, 1, 1.0);
        g.beta = beta;
        g
    }

    #[test]
    fn scalar_quadratic_oracle() {
        // M = 1 + 0.9 M / (1 + 0.9 M)  =>  0.9 M^2 - 0.8 M - 1 = 0.
        let ric = riccati_algebraic(&scalar(0.9), &RiccatiOptions::default()).unwrap();
        let m = (0.8 + (0.64f64 + 3.6).sqrt()) / 1.8;
        assert!((ric.m[(0, 0)] - m).abs() < 1e-12);
        assert!((ric.f[(0, 0)] + 0.9 * m / (1.0 + 0.9 * m)).abs() < 1e-12);
        assert!(ric.residual <= 1e-10);
    }

    #[test]
    fn myopic_limit() {
        let ric = riccati_algebraic(&scalar(0.0), &RiccatiOptions::default()).unwrap();
        assert_eq!(ric.m[(0, 0)], 1.0);
        assert_eq!(ric.f[(0, 0)], 0.0);
    }

    #[test]
    fn independent_of_starting_point() {
        for seed in 0..5 {
            let dm = scenarios::random_stabilizable_group(seed, 3, 2, 1, Horizon::Infinite);
            let from_zero = riccati_algebraic(&dm, &RiccatiOptions { initial: Some(Mat::zeros(3, 3)), ..Default::default() }).unwrap();
            let q10 = dm.stage(0).q.clone() * 10.0;
            let from_big = riccati_algebraic(&dm, &RiccatiOptions { initial: Some(q10), ..Default::default() }).unwrap();
            assert!((from_zero.m - from_big.m).amax() < 1e-9);
        }
    }

    #[test]
    fn damping_reaches_same_fixed_point() {
        let dm = scenarios::random_stabilizable_group(11, 2, 1, 1, Horizon::Infinite);
        let plain = riccati_algebraic(&dm, &RiccatiOptions::default()).unwrap();
        let damped = riccati_algebraic(&dm, &RiccatiOptions { damping: 0.5, ..Default::default() }).unwrap();
        assert!((plain.m - damped.m).amax() < 1e-9);
    }

    #[test]
    fn partial_sums_match_resolvent() {
        let mut dm = scenarios::random_stabilizable_group(4, 2, 1, 1, Horizon::Infinite);
        dm.beta = 0.8;
        let ric = riccati_algebraic(&dm, &RiccatiOptions::default()).unwrap();
        let pol = exo_gains_infinite(&dm, &ric, &Vector::zeros(2)).unwrap();
        let mut partial = Mat::zeros(1, 1);
        for n in 0..=200 {
            partial += pol.g_n(n);
        }
        assert!((partial - &pol.g_sum).amax() < 1e-12);
        assert!(pol.h.amax() == 0.0);
    }

    #[test]
    fn decoupled_gains_vanish() {
        let mut dm = scalar(0.9);
        dm.stages[0].k = Mat::zeros(1, 1);
        dm.stages[0].l = Mat::zeros(1, 1);
        dm.stages[0].c = Mat::zeros(1, 1);
        let ric = riccati_algebraic(&dm, &RiccatiOptions::default()).unwrap();
        let pol = exo_gains_infinite(&dm, &ric, &Vector::zeros(1)).unwrap();
        assert_eq!(pol.g0.amax(), 0.0);
        assert_eq!(pol.g_sum.amax(), 0.0);
        assert_eq!(pol.g_n(3).amax(), 0.0);
    }

    #[test]
    fn finite_horizon_limit_matches() {
        // Gains of a long finite horizon, read at k = 0, converge to the
        // stationary family: this pins the power of the generator in G_n.
        let mut dm = scenarios::random_stabilizable_group(8, 2, 2, 2, Horizon::Finite(1));
        dm.beta = 0.85;
        let ric = riccati_algebraic(&dm, &RiccatiOptions::default()).unwrap();
        let w = Vector::from_vec(vec![0.3, -0.2]);
        let inf = exo_gains_infinite(&dm, &ric, &w).unwrap();
        let mut fin_dm = dm.clone();
        fin_dm.q_terminal = Some(ric.m.clone());
        let ladder = riccati_finite(&fin_dm, 120).unwrap();
        let fin = exo_gains_finite(&fin_dm, &ladder, &w).unwrap();
        assert!((&ladder.m[0] - &ric.m).amax() < 1e-10);
        for n in 0..6 {
            assert!((fin.g(0, n) - inf.g_n(n)).amax() < 1e-10, "n = {n}");
        }
        assert!((&fin.h[0] - &inf.h).amax() < 1e-8);
    }

    #[test]
    fn unstabilizable_fails() {
        let mut dm = scalar(0.99);
        dm.stages[0].a = Mat::from_element(1, 1, 2.0);
        dm.stages[0].b = Mat::zeros(1, 1);
        let err = riccati_algebraic(&dm, &RiccatiOptions { budget: 2000, ..Default::default() }).unwrap_err();
        assert!(err.is_solver_failure(), "{err}");
    }
}
