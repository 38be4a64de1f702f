use super::assemble::{assemble_closed_loop, control_effect, ClosedLoopCoeffs};
use super::{BeliefInit, BeliefModel, BeliefStage, GroupGains};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr_exo::{exo_gains_finite, riccati_finite, FiniteExoPolicy};
use crate::model::{validate_lq_spec, LqGameSpec};
use crate::simulate::controller::Controller;

/// Condition number above which `I - Lambda_k` is declared singular.
pub const SINGULARITY_COND: f64 = 1e12;

/// The linear system `(I - Lambda_k) yhat = rhs_x * Xhat_k + rhs_c` for the
/// stacked forecasts `yhat = (yhat_{k|k-1}, ..., yhat_{T-1|k-1})`.
#[derive(Debug, Clone)]
pub struct EnvSystem {
    pub k: usize,
    pub lhs: Mat,
    pub rhs_x: Mat,
    pub rhs_c: Vector,
}

/// Forecast path `Xhat_{t|k-1}` implied by an initial estimate and the
/// forecasts `yhat` (stacked from stage `k`), for `t = k, ..., T`.
pub fn forecast_states(coeffs: &ClosedLoopCoeffs, k: usize, x_hat: &Vector, y_hat: &Vector) -> Vec<Vector> {
    let p = coeffs.env_dim();
    let mut out = vec![x_hat.clone()];
    for t in k..coeffs.horizon {
        let x = out.last().expect("nonempty");
        let mut next = &coeffs.a[t] * x + &coeffs.hx[t] + &coeffs.w_mean + &coeffs.c[t] * y_hat.rows((t - k) * p, p);
        for (j, g) in coeffs.gx[t].iter().enumerate() {
            next += g * y_hat.rows((t + j - k) * p, p);
        }
        out.push(next);
    }
    out
}

pub fn env_system(coeffs: &ClosedLoopCoeffs, k: usize) -> EnvSystem {
    let (p, nx, horizon) = (coeffs.env_dim(), coeffs.state_dim(), coeffs.horizon);
    let len = (horizon - k) * p;
    let mut lhs = Mat::identity(len, len);
    let mut rhs_x = Mat::zeros(len, nx);
    let mut rhs_c = Vector::zeros(len);
    // Xhat_t = phi Xhat_k + psi yhat + kappa
    let mut phi = Mat::identity(nx, nx);
    let mut psi = Mat::zeros(nx, len);
    let mut kappa = Vector::zeros(nx);
    for t in k..horizon {
        let r = (t - k) * p;
        let d = &coeffs.d[t];
        {
            let mut rows = lhs.rows_mut(r, p);
            rows -= d * &psi;
        }
        for (j, g) in coeffs.gp[t].iter().enumerate() {
            let cidx = (t + j - k) * p;
            let mut blk = lhs.view_mut((r, cidx), (p, p));
            blk -= g;
        }
        rhs_x.rows_mut(r, p).copy_from(&(d * &phi));
        rhs_c.rows_mut(r, p).copy_from(&(d * &kappa + &coeffs.hp[t] + &coeffs.xi_mean));

        let a = &coeffs.a[t];
        let mut psi_next = a * &psi;
        for (j, g) in coeffs.gx[t].iter().enumerate() {
            let cidx = (t + j - k) * p;
            let mut blk = psi_next.columns_mut(cidx, p);
            blk += g;
        }
        {
            let mut blk = psi_next.columns_mut(r, p);
            blk += &coeffs.c[t];
        }
        kappa = a * &kappa + &coeffs.hx[t] + &coeffs.w_mean;
        phi = a * &phi;
        psi = psi_next;
    }
    EnvSystem { k, lhs, rhs_x, rhs_c }
}

/// Forecast maps `E[y_t | Y_{k-1}] = a_{t,k-1} Xhat_{k|k-1} + b_{t,k-1}`.
#[derive(Debug, Clone)]
pub struct EnvAffineSolution {
    /// `a[k][t - k]` (p x dim X).
    pub a: Vec<Vec<Mat>>,
    pub b: Vec<Vec<Vector>>,
    /// Condition number of `I - Lambda_k` per `k`.
    pub condition: Vec<f64>,
}

/// Solves the forecast equations at stage `k`; returns `(a_{., k-1}, b_{., k-1}, cond)`.
pub fn solve_env_equations(coeffs: &ClosedLoopCoeffs, k: usize) -> Result<(Vec<Mat>, Vec<Vector>, f64)> {
    let sys = env_system(coeffs, k);
    let cond = linalg::condition_number(&sys.lhs);
    if !cond.is_finite() || cond > SINGULARITY_COND {
        return Err(Error::SingularEquilibrium { stage: k, condition_number: cond });
    }
    let lu = sys.lhs.clone().lu();
    let a = lu.solve(&sys.rhs_x).ok_or(Error::SingularEquilibrium { stage: k, condition_number: cond })?;
    let b = lu.solve(&sys.rhs_c).ok_or(Error::SingularEquilibrium { stage: k, condition_number: cond })?;
    let p = coeffs.env_dim();
    let n = coeffs.horizon - k;
    Ok((
        (0..n).map(|j| a.rows(j * p, p).into_owned()).collect(),
        (0..n).map(|j| b.rows(j * p, p).into_owned()).collect(),
        cond,
    ))
}

pub fn solve_all_env_equations(coeffs: &ClosedLoopCoeffs) -> Result<EnvAffineSolution> {
    let mut sol = EnvAffineSolution { a: Vec::new(), b: Vec::new(), condition: Vec::new() };
    for k in 0..coeffs.horizon {
        let (a, b, c) = solve_env_equations(coeffs, k)?;
        sol.a.push(a);
        sol.b.push(b);
        sol.condition.push(c);
    }
    Ok(sol)
}

/// Finite-horizon SEBEU profile.
#[derive(Debug, Clone)]
pub struct SebeuFinite {
    pub exo: Vec<FiniteExoPolicy>,
    pub coeffs: ClosedLoopCoeffs,
    pub env_solution: EnvAffineSolution,
    pub gains: Vec<GroupGains>,
    pub belief: BeliefModel,
}

impl SebeuFinite {
    pub fn horizon(&self) -> usize {
        self.coeffs.horizon
    }

    /// Each group's strategy as a controller driven by the belief model's
    /// predictor.
    pub fn controllers(&self) -> Vec<Controller> {
        self.gains.iter().map(|g| self.belief.controller(g)).collect()
    }
}

pub fn build_sebeu_finite(spec: &LqGameSpec) -> Result<SebeuFinite> {
    validate_lq_spec(spec).into_result()?;
    let horizon = spec.horizon_len().ok_or_else(|| Error::Unsupported("finite-horizon SEBEU on an infinite spec".into()))?;
    let exo = spec
        .groups
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let ladder = riccati_finite(grp, horizon)?;
            exo_gains_finite(grp, &ladder, &spec.group_slice(&spec.noise.w_mean, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = assemble_closed_loop(spec, &exo)?;
    let env_solution = solve_all_env_equations(&coeffs)?;

    let gains: Vec<GroupGains> = exo
        .iter()
        .map(|pol| {
            let mut out = GroupGains { f: pol.f.clone(), g: Vec::with_capacity(horizon), h: Vec::with_capacity(horizon) };
            for t in 0..horizon {
                let mut g = Mat::zeros(pol.f[t].nrows(), coeffs.state_dim());
                let mut h = pol.h[t].clone();
                for (j, gtn) in pol.g[t].iter().enumerate() {
                    g += gtn * &env_solution.a[t][j];
                    h += gtn * &env_solution.b[t][j];
                }
                out.g.push(g);
                out.h.push(h);
            }
            out
        })
        .collect();

    let mut stages = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let gs: Vec<Mat> = gains.iter().map(|g| g.g[t].clone()).collect();
        let hs: Vec<Mat> = gains.iter().map(|g| linalg::col(&g.h[t])).collect();
        let (gp, gx) = control_effect(spec, t, &gs);
        let (hp, hx) = control_effect(spec, t, &hs);
        stages.push(BeliefStage {
            d: coeffs.d[t].clone(),
            gp,
            hp: hp.column(0).into_owned(),
            a: coeffs.a[t].clone(),
            gx,
            hx: hx.column(0).into_owned(),
            c: coeffs.c[t].clone(),
            gain: Mat::zeros(0, 0),
        });
    }
    let nz = &spec.noise;
    let k0 = nz.y_prev_x0_cov.transpose() * linalg::pinv(&nz.y_prev_cov);
    let sigma0 = linalg::sym(&(&nz.x0_cov - &k0 * &nz.y_prev_x0_cov));
    let init = BeliefInit::FromPrevious { constant: &nz.x0_mean - &k0 * &nz.y_prev_mean, coef: k0, sigma: sigma0 };
    let mut belief = BeliefModel {
        stages,
        init,
        xi_mean: nz.xi_mean.clone(),
        xi_cov: nz.xi_cov.clone(),
        w_mean: nz.w_mean.clone(),
        w_cov: nz.w_cov.clone(),
        sigma: Vec::new(),
    };
    belief.run_kalman(horizon);
    Ok(SebeuFinite { exo, coeffs, env_solution, gains, belief })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use rand::{Rng, SeedableRng};

    fn unit_profile(n: usize) -> SebeuFinite {
        build_sebeu_finite(&scenarios::example2(&scenarios::Example2Params::unit(), n)).unwrap()
    }

    #[test]
    fn example2_determinant_proxy() {
        // (1 - g00)(1 - f1 b g01 - g11) - f1 b g00 g01 = 1.4 * 1.6 - 0.04 = 2.2
        let prof = unit_profile(1);
        let sys = env_system(&prof.coeffs, 0);
        assert!((sys.lhs.determinant() - 2.2).abs() < 1e-14);
        // Zero-mean primitives: b = 0, so E[y_0] = E[y_1] = 0.
        assert!(prof.env_solution.b.iter().flatten().all(|b| b.amax() < 1e-15));
    }

    #[test]
    fn example2_sebeu_closed_form() {
        // s_0 = f0 x0 (y_{-1} is degenerate), s_1 = f1 x1 + k1 y0, k1 = -1/34.
        let prof = unit_profile(1);
        let ctrl = &prof.controllers()[0];
        let (c0, h0) = ctrl.history_form(0).unwrap();
        assert!(c0[0].amax() < 1e-15 && h0.amax() < 1e-15);
        assert!((ctrl.stage(0).f[(0, 0)] + 0.6).abs() < 1e-15);
        let (c1, h1) = ctrl.history_form(1).unwrap();
        assert!((c1[1][(0, 0)] + 1.0 / 34.0).abs() < 1e-12, "k1 = {}", c1[1][(0, 0)]);
        assert!(c1[0].amax() < 1e-15 && h1.amax() < 1e-15);
        assert!((ctrl.stage(1).f[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn k1_scales_like_one_over_n() {
        let k1 = |n: usize| {
            let (c, _) = unit_profile(n).controllers()[0].history_form(1).unwrap();
            c[1][(0, 0)]
        };
        let scaled: Vec<f64> = [1, 10, 100, 1000, 10000].iter().map(|&n| n as f64 * k1(n)).collect();
        // N k1 settles to a nonzero limit, so k1 itself is O(1/N).
        assert!((scaled[4] - scaled[3]).abs() < 1e-2 * scaled[4].abs(), "{scaled:?}");
        assert!((scaled[4] - scaled[3]).abs() < (scaled[1] - scaled[0]).abs());
    }

    #[test]
    fn decoupled_spec_gives_independent_lqr() {
        let mut spec = scenarios::random_weakly_coupled(5, &scenarios::RandomSpecConfig::finite(4));
        for g in spec.groups.iter_mut() {
            for st in g.stages.iter_mut() {
                st.k.fill(0.0);
                st.l.fill(0.0);
                st.c.fill(0.0);
            }
        }
        for e in spec.env.iter_mut() {
            for list in [&mut e.b1, &mut e.b2, &mut e.e1, &mut e.e2] {
                list.iter_mut().for_each(|m| m.fill(0.0));
            }
        }
        let prof = build_sebeu_finite(&spec).unwrap();
        assert!(prof.gains.iter().flat_map(|g| g.g.iter()).all(|g| g.amax() == 0.0));
        for (g, grp) in spec.groups.iter().enumerate() {
            let ladder = riccati_finite(grp, 4).unwrap();
            for t in 0..4 {
                assert_eq!(prof.gains[g].f[t], ladder.f[t]);
            }
        }
    }

    #[test]
    fn no_feedback_means_identity_system() {
        let mut spec = scenarios::random_weakly_coupled(2, &scenarios::RandomSpecConfig::finite(3));
        for g in spec.groups.iter_mut() {
            for st in g.stages.iter_mut() {
                st.k.fill(0.0);
                st.l.fill(0.0);
                st.c.fill(0.0);
            }
        }
        let prof = build_sebeu_finite(&spec).unwrap();
        for k in 0..3 {
            let sys = env_system(&prof.coeffs, k);
            assert_eq!(sys.lhs, Mat::identity(sys.lhs.nrows(), sys.lhs.ncols()));
        }
    }

    #[test]
    fn matches_contraction_iteration() {
        let mut cfg = scenarios::RandomSpecConfig::finite(4);
        cfg.coupling = 1e-3;
        for seed in 0..5 {
            let spec = scenarios::random_weakly_coupled(seed, &cfg);
            let prof = build_sebeu_finite(&spec).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for k in 0..4 {
                let sys = env_system(&prof.coeffs, k);
                let xh = Vector::from_fn(prof.coeffs.state_dim(), |_, _| rng.random_range(-1.0..1.0));
                let ups = &sys.rhs_x * &xh + &sys.rhs_c;
                let lambda = Mat::identity(sys.lhs.nrows(), sys.lhs.ncols()) - &sys.lhs;
                let mut y = Vector::zeros(ups.len());
                for _ in 0..200 {
                    let next = &lambda * &y + &ups;
                    let done = (&next - &y).amax() < 1e-14;
                    y = next;
                    if done {
                        break;
                    }
                }
                let (a, b, _) = solve_env_equations(&prof.coeffs, k).unwrap();
                let p = spec.env_dim;
                for (j, (aj, bj)) in a.iter().zip(&b).enumerate() {
                    let direct = aj * &xh + bj;
                    assert!((direct - y.rows(j * p, p)).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nesting_consistency() {
        for seed in 0..5 {
            let spec = scenarios::random_weakly_coupled(seed, &scenarios::RandomSpecConfig::finite(5));
            let prof = build_sebeu_finite(&spec).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 7);
            let sol = &prof.env_solution;
            for _ in 0..20 {
                let xh = Vector::from_fn(prof.coeffs.state_dim(), |_, _| rng.random_range(-2.0..2.0));
                for k in 0..5 {
                    let yk: Vec<Vector> = sol.a[k].iter().zip(&sol.b[k]).map(|(a, b)| a * &xh + b).collect();
                    let refs: Vec<&Vector> = yk.iter().collect();
                    let stacked = linalg::vstack_vec(&refs);
                    let path = forecast_states(&prof.coeffs, k, &xh, &stacked);
                    for l in k..5 {
                        let xl = &path[l - k];
                        for t in l..5 {
                            let via_l = &sol.a[l][t - l] * xl + &sol.b[l][t - l];
                            assert!((via_l - &yk[t - k]).amax() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn singular_system_is_reported() {
        // Rescale E1 so that the one-stage system 1 - Gp_{0,0} vanishes.
        let mut spec = scenarios::example2(&scenarios::Example2Params { horizon: 1, ..scenarios::Example2Params::unit() }, 1);
        let gp = build_sebeu_finite(&spec).unwrap().coeffs.gp[0][0][(0, 0)];
        for e in spec.env.iter_mut() {
            e.e1[0] /= gp;
        }
        let err = build_sebeu_finite(&spec).unwrap_err();
        assert!(matches!(err, Error::SingularEquilibrium { stage: 0, .. }), "{err}");
    }

    #[test]
    fn identical_groups_get_identical_policies() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 4).split_member(0).unwrap();
        let prof = build_sebeu_finite(&spec).unwrap();
        for t in 0..2 {
            assert_eq!(prof.gains[0].f[t], prof.gains[1].f[t]);
            assert_eq!(prof.gains[0].g[t], prof.gains[1].g[t]);
            assert_eq!(prof.gains[0].h[t], prof.gains[1].h[t]);
        }
    }
}
