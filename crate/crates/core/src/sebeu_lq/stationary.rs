use super::assemble::{assemble_stationary, control_effect, StationaryCoeffs};
use super::{kalman_step, BeliefInit, BeliefModel, BeliefStage, GroupGains};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqr_exo::{exo_gains_infinite, riccati_algebraic, InfiniteExoPolicy, RiccatiOptions};
use crate::model::{validate_lq_spec, LqGameSpec};

/// Residual tolerance for the steady-state equations.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    /// Initial damping in `(0, 1]`; halved whenever the residual grows.
    pub damping: f64,
    pub tol: f64,
    pub budget: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { damping: 0.5, tol: 1e-13, budget: 10_000 }
    }
}

/// Time-invariant forecast maps: `E[y_{t+n} | Y_{t-1}] = a Abar^n [Xhat_t; 1]`.
#[derive(Debug, Clone)]
pub struct EnvFixedPoint {
    /// `p x (dim X + 1)`.
    pub a: Mat,
    /// `(dim X + 1) x (dim X + 1)`, last row `(0, ..., 0, 1)`.
    pub abar: Mat,
    /// Each group's forecast term `sum_n G_n a Abar^n` (`m x (dim X + 1)`).
    pub s: Vec<Mat>,
    pub iterations: usize,
    pub residual: f64,
}

fn forecast_terms(policies: &[InfiniteExoPolicy], a: &Mat, abar: &Mat) -> Result<Vec<Mat>> {
    policies
        .iter()
        .map(|pol| {
            let v = &pol.right * a;
            let y = linalg::stein_general(&pol.generator, abar, &(&v * abar))?;
            Ok(&pol.g0 * a + &pol.left * y)
        })
        .collect()
}

fn ansatz_update(spec: &LqGameSpec, co: &StationaryCoeffs, s: &[Mat]) -> (Mat, Mat) {
    let nx = co.state_dim();
    let (on_y, on_x) = control_effect(spec, 0, s);
    let mut a = on_y;
    {
        let mut left = a.columns_mut(0, nx);
        left += &co.d;
    }
    {
        let mut last = a.column_mut(nx);
        last += &co.hp + &co.xi_mean;
    }
    let mut abar = Mat::zeros(nx + 1, nx + 1);
    let mut top = on_x + &co.c * &a;
    {
        let mut left = top.columns_mut(0, nx);
        left += &co.a;
    }
    {
        let mut last = top.column_mut(nx);
        last += &co.hx + &co.w_mean;
    }
    abar.rows_mut(0, nx).copy_from(&top);
    abar[(nx, nx)] = 1.0;
    (a, abar)
}

/// Solves the stationary forecast fixed point by damped iteration from the
/// decoupled solution.
pub fn solve_infinite_env_fixedpoint(spec: &LqGameSpec, co: &StationaryCoeffs, opts: &FixedPointOptions) -> Result<EnvFixedPoint> {
    let nx = co.state_dim();
    let zero_s: Vec<Mat> = co.policies.iter().map(|p| Mat::zeros(p.f.nrows(), nx + 1)).collect();
    let (mut a, mut abar) = ansatz_update(spec, co, &zero_s);
    let mut damping = opts.damping;
    let mut prev_res = f64::INFINITY;
    for it in 1..=opts.budget {
        let rho = linalg::spectral_radius(&abar.view((0, 0), (nx, nx)).into_owned());
        if rho >= 1.0 {
            return Err(Error::InstabilityDetected { what: "forecast transition".into(), spectral_radius: rho });
        }
        let s = forecast_terms(&co.policies, &a, &abar)?;
        let (a_new, abar_new) = ansatz_update(spec, co, &s);
        let res = (&a_new - &a).amax().max((&abar_new - &abar).amax());
        if res <= opts.tol * (1.0 + a.amax().max(abar.amax())) {
            return Ok(EnvFixedPoint { a: a_new, abar: abar_new, s, iterations: it, residual: res });
        }
        if res > prev_res {
            damping *= 0.5;
        }
        prev_res = res;
        a = &a * (1.0 - damping) + a_new * damping;
        abar = &abar * (1.0 - damping) + abar_new * damping;
    }
    Err(Error::NoConvergence { what: "stationary forecast fixed point".into(), iterations: opts.budget, residual: prev_res })
}

/// Stationary SEBEU with steady-state belief initialization.
#[derive(Debug, Clone)]
pub struct SebeuStationary {
    pub exo: Vec<InfiniteExoPolicy>,
    pub coeffs: StationaryCoeffs,
    pub fixed_point: EnvFixedPoint,
    pub gains: Vec<GroupGains>,
    pub belief: BeliefModel,
    /// Stationary filter error covariance.
    pub sigma: Mat,
    /// Stationary covariance of `X`.
    pub theta: Mat,
    /// Stationary mean of `X` (and of `Xhat`).
    pub x_hat0: Vector,
    /// Closed loop on `(X, X - Xhat)` driven by `(W, xi)`.
    pub a_cl: Mat,
    pub b_cl: Mat,
    pub sigma_residual: f64,
    pub theta_residual: f64,
    pub mean_residual: f64,
    pub filter_iterations: usize,
}

/// Iterates the predictor Riccati map from `w_cov` to its fixed point.
pub fn filter_riccati(a: &Mat, d: &Mat, xi_cov: &Mat, w_cov: &Mat) -> Result<(Mat, Mat, usize, f64)> {
    linalg::require_pd(xi_cov, "xi covariance (stationary filter)")?;
    let mut sigma = w_cov.clone();
    let budget = 100_000;
    let mut res = f64::INFINITY;
    for it in 1..=budget {
        let (_, next) = kalman_step(a, d, &sigma, xi_cov, w_cov);
        res = (&next - &sigma).amax();
        if !res.is_finite() {
            break;
        }
        sigma = next;
        if res <= 1e-15 * (1.0 + sigma.amax()) {
            let (gain, fixed) = kalman_step(a, d, &sigma, xi_cov, w_cov);
            let res = (&fixed - &sigma).amax();
            return Ok((sigma, gain, it, res));
        }
    }
    Err(Error::FilterRiccatiDiverged { residual: res })
}

pub fn build_sebeu_infinite_stationary(spec: &LqGameSpec, opts: &FixedPointOptions) -> Result<SebeuStationary> {
    validate_lq_spec(spec).into_result()?;
    if spec.horizon_len().is_some() {
        return Err(Error::Unsupported("stationary SEBEU on a finite-horizon spec".into()));
    }
    let exo = spec
        .groups
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let ric = riccati_algebraic(grp, &RiccatiOptions::default())?;
            exo_gains_infinite(grp, &ric, &spec.group_slice(&spec.noise.w_mean, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = assemble_stationary(spec, &exo)?;
    let fixed_point = solve_infinite_env_fixedpoint(spec, &coeffs, opts)?;
    let nx = coeffs.state_dim();

    let gains: Vec<GroupGains> = exo
        .iter()
        .zip(&fixed_point.s)
        .map(|(pol, s)| GroupGains {
            f: vec![pol.f.clone()],
            g: vec![s.columns(0, nx).into_owned()],
            h: vec![s.column(nx) + &pol.h],
        })
        .collect();
    let gs: Vec<Mat> = gains.iter().map(|g| g.g[0].clone()).collect();
    let hs: Vec<Mat> = gains.iter().map(|g| linalg::col(&g.h[0])).collect();
    let (gp, gx) = control_effect(spec, 0, &gs);
    let (hp, hx) = control_effect(spec, 0, &hs);
    let (hp, hx) = (hp.column(0).into_owned(), hx.column(0).into_owned());

    let nz = &spec.noise;
    let (sigma, gain, filter_iterations, sigma_residual) = filter_riccati(&coeffs.a, &coeffs.d, &nz.xi_cov, &nz.w_cov)?;

    let (a, d, c) = (&coeffs.a, &coeffs.d, &coeffs.c);
    let a_x = a + c * d + &gx + c * &gp;
    let mut a_cl = Mat::zeros(2 * nx, 2 * nx);
    a_cl.view_mut((0, 0), (nx, nx)).copy_from(&a_x);
    a_cl.view_mut((0, nx), (nx, nx)).copy_from(&(-(&gx + c * &gp)));
    a_cl.view_mut((nx, nx), (nx, nx)).copy_from(&(a - &gain * d));
    let p = spec.env_dim;
    let mut b_cl = Mat::zeros(2 * nx, nx + p);
    b_cl.view_mut((0, 0), (nx, nx)).copy_from(&Mat::identity(nx, nx));
    b_cl.view_mut((0, nx), (nx, p)).copy_from(c);
    b_cl.view_mut((nx, 0), (nx, nx)).copy_from(&Mat::identity(nx, nx));
    b_cl.view_mut((nx, nx), (nx, p)).copy_from(&(-&gain));

    if let Some(ev) = linalg::dominant_eigenvalue(&a_cl) {
        if ev.norm() >= 1.0 {
            return Err(Error::ClosedLoopUnstable { re: ev.re, im: ev.im, modulus: ev.norm() });
        }
    }
    let noise_cov = linalg::block_diag(&[&nz.w_cov, &nz.xi_cov]);
    let drive = &b_cl * noise_cov * b_cl.transpose();
    let pcov = linalg::stein(&a_cl, &drive)?;
    let theta = pcov.view((0, 0), (nx, nx)).into_owned();
    let theta_residual = (&theta - (&a_cl * &pcov * a_cl.transpose() + &drive).view((0, 0), (nx, nx))).amax();

    let constant = &hx + &nz.w_mean + c * (&hp + &nz.xi_mean);
    let x_hat0 = (Mat::identity(nx, nx) - &a_x)
        .lu()
        .solve(&constant)
        .ok_or(Error::ClosedLoopUnstable { re: 1.0, im: 0.0, modulus: 1.0 })?;
    let mean_residual = (&x_hat0 - (&a_x * &x_hat0 + &constant)).amax();

    let gap = linalg::sym(&(&theta - &sigma));
    let min_eig = linalg::min_sym_eigenvalue(&gap);
    if min_eig < -1e-8 {
        return Err(Error::SteadyStateInfeasible { min_eigenvalue: min_eig });
    }

    let belief = BeliefModel {
        stages: vec![BeliefStage { d: d.clone(), gp, hp, a: a.clone(), gx, hx, c: c.clone(), gain }],
        init: BeliefInit::Stationary { x_hat0: x_hat0.clone(), sigma: sigma.clone(), theta: theta.clone() },
        xi_mean: nz.xi_mean.clone(),
        xi_cov: nz.xi_cov.clone(),
        w_mean: nz.w_mean.clone(),
        w_cov: nz.w_cov.clone(),
        sigma: vec![sigma.clone()],
    };
    Ok(SebeuStationary {
        exo,
        coeffs,
        fixed_point,
        gains,
        belief,
        sigma,
        theta,
        x_hat0,
        a_cl,
        b_cl,
        sigma_residual,
        theta_residual,
        mean_residual,
        filter_iterations,
    })
}
