use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr_exo::{exo_gains_infinite, riccati_algebraic, EnvStateSpace, InfiniteExoPolicy, RiccatiOptions};
use crate::model::{validate_lq_spec, LqGameSpec};
use crate::simulate::gaussian::GaussianLaw;

/// Gap above which the spec's initial means count as inconsistent with
/// the stationary mean-field point.
const INIT_MISMATCH_TOL: f64 = 1e-10;

/// Symmetric stationary SEBEU of a population of identical DMs whose
/// environment depends on empirical averages only.
///
/// With infinitely many DMs the averages are deterministic, the
/// environment is i.i.d. with mean `y_hat`, and every DM plays
/// `u = F x + G y_hat + H`.
#[derive(Debug, Clone)]
pub struct MeanFieldSolution {
    pub policy: InfiniteExoPolicy,
    pub y_hat: Vector,
    pub x_hat: Vector,
    pub condition_number: f64,
    /// Set when the spec's `E[y_{-1}]`, `E[x_0]` differ from the stationary
    /// point, in which case the profile is an equilibrium only from the
    /// stationary start.
    pub init_mismatch: Option<String>,
}

impl MeanFieldSolution {
    /// The per-DM constant control term `G y_hat + H`.
    pub fn offset(&self) -> Vector {
        &self.policy.g_sum * &self.y_hat + &self.policy.h
    }

    /// The environment a single DM faces: i.i.d. `N(y_hat, cov xi)`,
    /// unaffected by anything that DM does.
    pub fn deviator_env(&self, spec: &LqGameSpec) -> EnvStateSpace {
        EnvStateSpace::iid(GaussianLaw { mean: self.y_hat.clone(), cov: spec.noise.xi_cov.clone() })
    }
}

fn require(cond: bool, assumption: &str, detail: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::AssumptionViolated { assumption: assumption.into(), detail })
    }
}

pub fn solve_mean_field(spec: &LqGameSpec) -> Result<MeanFieldSolution> {
    validate_lq_spec(spec).into_result()?;
    require(spec.horizon_len().is_none(), "mean-field stationarity", "the horizon must be infinite".into())?;
    require(spec.groups.len() == 1, "identical DMs", format!("expected a single group, found {}", spec.groups.len()))?;
    require(spec.env_state_dim == 0, "environment without own state", format!("environment state dimension {}", spec.env_state_dim))?;
    let grp = &spec.groups[0];
    require(grp.stages.len() == 1, "time-invariant DMs", format!("{} stage entries", grp.stages.len()))?;
    require(spec.env.len() == 1, "time-invariant environment", format!("{} environment entries", spec.env.len()))?;
    let st = grp.stage(0);
    require(st.c.amax() == 0.0, "no direct environment effect on states", "C must vanish".into())?;

    let ric = riccati_algebraic(grp, &RiccatiOptions::default())?;
    let policy = exo_gains_infinite(grp, &ric, &spec.noise.w_mean)?;
    let env = spec.env_stage(0);
    let (p, n) = (spec.env_dim, grp.n());
    let (e1, e2) = (&env.e1[0], &env.e2[0]);
    let (f, gs, h) = (&policy.f, &policy.g_sum, &policy.h);

    let mut lhs = Mat::identity(p + n, p + n);
    lhs.view_mut((0, 0), (p, p)).copy_from(&(Mat::identity(p, p) - e1 * gs));
    lhs.view_mut((0, p), (p, n)).copy_from(&(-(e1 * f + e2)));
    lhs.view_mut((p, 0), (n, p)).copy_from(&(-(&st.b * gs)));
    lhs.view_mut((p, p), (n, n)).copy_from(&(Mat::identity(n, n) - (&st.a + &st.b * f)));
    let rhs = linalg::vstack_vec(&[&(e1 * h + &spec.noise.xi_mean), &(&st.b * h + &spec.noise.w_mean)]);
    let cond = linalg::condition_number(&lhs);
    if !cond.is_finite() || cond > super::SINGULARITY_COND {
        return Err(Error::SingularMeanField { condition_number: cond });
    }
    let sol = lhs.lu().solve(&rhs).ok_or(Error::SingularMeanField { condition_number: cond })?;
    let y_hat = sol.rows(0, p).into_owned();
    let x_hat = sol.rows(p, n).into_owned();

    let gap = (&spec.noise.y_prev_mean - &y_hat).amax().max((&spec.noise.x0_mean - &x_hat).amax());
    let init_mismatch = (gap > INIT_MISMATCH_TOL).then(|| {
        format!(
            "initial means differ from the stationary point by {gap:.3e}: E[y_-1] = {:?} vs {:?}, E[x_0] = {:?} vs {:?}",
            spec.noise.y_prev_mean.as_slice(),
            y_hat.as_slice(),
            spec.noise.x0_mean.as_slice(),
            x_hat.as_slice()
        )
    });
    Ok(MeanFieldSolution { policy, y_hat, x_hat, condition_number: cond, init_mismatch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn scalar_mf(e1: f64, e2: f64) -> LqGameSpec {
        let mut spec = scenarios::scalar_stationary(0.0);
        let st = &mut spec.groups[0].stages[0];
        st.a[(0, 0)] = 0.5;
        spec.groups[0].count = 1000;
        spec.n_dm = 1000;
        spec.env[0].e1[0][(0, 0)] = e1;
        spec.env[0].e2[0][(0, 0)] = e2;
        spec
    }

    #[test]
    fn hand_solved_zero_mean_case() {
        // K = L = 0 gives G = 0, so y = F x and x = (A + B F) x: both vanish.
        let mut spec = scalar_mf(1.0, 0.0);
        spec.noise.w_mean.fill(0.0);
        spec.noise.xi_mean.fill(0.0);
        let mf = solve_mean_field(&spec).unwrap();
        assert_eq!(mf.policy.g_sum.amax(), 0.0);
        assert!(mf.y_hat.amax() < 1e-15 && mf.x_hat.amax() < 1e-15);
    }

    #[test]
    fn environment_free_case() {
        let spec = scalar_mf(0.0, 0.0);
        let mf = solve_mean_field(&spec).unwrap();
        assert!((mf.y_hat[0] - 0.2).abs() < 1e-15);
        let af = 0.5 + mf.policy.f[(0, 0)];
        let want = (mf.policy.h[0] + 0.1) / (1.0 - af);
        assert!((mf.x_hat[0] - want).abs() < 1e-14);
        assert!(mf.init_mismatch.is_some());
    }

    #[test]
    fn fixed_point_equations_hold() {
        let mut spec = scalar_mf(0.3, -0.2);
        let st = &mut spec.groups[0].stages[0];
        st.k[(0, 0)] = 0.2;
        st.l[(0, 0)] = -0.1;
        let mf = solve_mean_field(&spec).unwrap();
        let (f, g, h) = (mf.policy.f[(0, 0)], mf.policy.g_sum[(0, 0)], mf.policy.h[0]);
        let (y, x) = (mf.y_hat[0], mf.x_hat[0]);
        assert!((y - ((0.3 * f - 0.2) * x + 0.3 * g * y + 0.3 * h + 0.2)).abs() < 1e-14);
        assert!((x - (0.5 * x + (f * x + g * y + h) + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn rejects_direct_environment_effect() {
        let mut spec = scalar_mf(0.3, 0.0);
        spec.groups[0].stages[0].c[(0, 0)] = 0.1;
        assert!(matches!(solve_mean_field(&spec), Err(Error::AssumptionViolated { .. })));
    }

    #[test]
    fn matching_initialization_has_no_warning() {
        let spec = scalar_mf(0.3, 0.1);
        let mf = solve_mean_field(&spec).unwrap();
        let mut aligned = spec.clone();
        aligned.noise.y_prev_mean = mf.y_hat.clone();
        aligned.noise.x0_mean = mf.x_hat.clone();
        assert!(solve_mean_field(&aligned).unwrap().init_mismatch.is_none());
    }
}
