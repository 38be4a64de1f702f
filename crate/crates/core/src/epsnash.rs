//! How far a SEBEU is from Nash.
//!
//! For LQ games the deviating DM searches over policies affine in its own
//! past states and the environment history, evaluated exactly against the
//! true closed loop. For finite games every unilateral deviation is
//! enumerated.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;
use finitediff::FiniteDiff;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_eq::{action_costs, conditional_env_distribution, MixedProfile, Weight};
use crate::linalg::{Mat, Vector};
use crate::model::{FiniteGameSpec, LqGameSpec};
use crate::scenarios::Example2Params;
use crate::lqr_exo::{eval_exo_cost_infinite, OwnNoise};
use crate::sebeu_lq::{build_sebeu_finite, MeanFieldSolution, SebeuFinite};
use crate::simulate::controller::{Controller, ControllerInit, ControllerStage};
use crate::simulate::moments::{expected_cost, propagate_moments, StartLaw};

/// Policies `u_t = F_t x_t + sum_{s<t} Jx_{t,s} x_s + sum_{s<t} Jy_{t,s} y_s + h_t`
/// (with `y_{-1}` included) for one DM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryClass {
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl HistoryClass {
    /// Width of the history `z_t = (y_{-1}, x_0, y_0, ..., x_{t-1}, y_{t-1})`.
    fn history_dim(&self, t: usize) -> usize {
        self.p + t * (self.n + self.p)
    }

    pub fn param_len(&self) -> usize {
        (0..self.horizon).map(|t| self.m * (self.n + self.history_dim(t) + 1)).sum()
    }

    pub fn controller(&self, theta: &[f64]) -> Controller {
        let (n, m, p) = (self.n, self.m, self.p);
        let mut pos = 0;
        let mut take = |rows: usize, cols: usize| {
            let out = Mat::from_column_slice(rows, cols, &theta[pos..pos + rows * cols]);
            pos += rows * cols;
            out
        };
        let stages = (0..self.horizon)
            .map(|t| {
                let d = self.history_dim(t);
                let f = take(m, n);
                let j = take(m, d);
                let h = take(m, 1).column(0).into_owned();
                let mut pm = Mat::zeros(d + n + p, d);
                pm.view_mut((0, 0), (d, d)).fill_with_identity();
                let mut qx = Mat::zeros(d + n + p, n);
                qx.view_mut((d, 0), (n, n)).fill_with_identity();
                let mut q = Mat::zeros(d + n + p, p);
                q.view_mut((d + n, 0), (p, p)).fill_with_identity();
                ControllerStage { f, j, h, p: pm, q, qx, r: Vector::zeros(d + n + p) }
            })
            .collect();
        Controller { init: ControllerInit::FromPrevious { constant: Vector::zeros(p), coef: Mat::identity(p, p) }, stages }
    }

    /// Parameters of a controller that depends on the environment history
    /// only (the SEBEU form).
    pub fn embed(&self, c: &Controller) -> Option<Vec<f64>> {
        let (n, p) = (self.n, self.p);
        let mut theta = Vec::with_capacity(self.param_len());
        for t in 0..self.horizon {
            let (ys, h) = c.history_form(t)?;
            let mut j = Mat::zeros(self.m, self.history_dim(t));
            for (s, coef) in ys.iter().enumerate() {
                // y_{s-1} sits after s blocks of (x, y) pairs; y_{-1} first.
                let col = if s == 0 { 0 } else { p + (s - 1) * (n + p) + n };
                j.view_mut((0, col), (self.m, p)).copy_from(coef);
            }
            theta.extend_from_slice(c.stage(t).f.as_slice());
            theta.extend_from_slice(j.as_slice());
            theta.extend_from_slice(h.as_slice());
        }
        Some(theta)
    }

    /// Parameters of an explicit two-stage scalar policy
    /// `u_0 = f0 x_0`, `u_1 = f1 x_1 + k1 y_0 + n1 u_0`.
    pub fn scalar_two_stage(&self, f0: f64, f1: f64, k1: f64, n1: f64) -> Vec<f64> {
        assert!(self.horizon == 2 && self.n == 1 && self.m == 1 && self.p == 1);
        // stage 0: f, j = [y_-1], h; stage 1: f, j = [y_-1, x_0, y_0], h.
        vec![f0, 0.0, 0.0, f1, 0.0, n1 * f0, k1, 0.0]
    }
}

/// Deviation search settings.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub starts: usize,
    pub grad_tol: f64,
    pub max_iters: u64,
    pub seed: u64,
    /// Scale of the random perturbation of the SEBEU parameters used by
    /// the extra starts.
    pub start_scale: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { starts: 8, grad_tol: 1e-9, max_iters: 500, seed: 0x5eb, start_scale: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapEntry {
    pub n_dm: usize,
    /// Group whose member deviates.
    pub dm: usize,
    pub sebeu_cost: f64,
    pub deviation_cost: f64,
    pub gap: f64,
    /// Parameters of the best deviation found (history class layout).
    pub deviation: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// Always "affine in own states and environment history": gaps are lower
    /// bounds on the true optimality gap.
    pub class: String,
    pub entries: Vec<GapEntry>,
    pub max_gap: f64,
}

/// The game seen by one member of group `g`: that member as its own
/// group, at index `g`.
pub fn deviator_spec(spec: &LqGameSpec, g: usize) -> Result<LqGameSpec> {
    if spec.groups[g].count == 1 {
        Ok(spec.clone())
    } else {
        spec.split_member(g)
    }
}

struct DeviationProblem<'a> {
    spec: &'a LqGameSpec,
    g: usize,
    class: HistoryClass,
    others: &'a [Controller],
}

impl DeviationProblem<'_> {
    fn cost_of(&self, theta: &[f64]) -> f64 {
        let mut ctrls = self.others.to_vec();
        ctrls[self.g] = self.class.controller(theta);
        let run = propagate_moments(self.spec, &ctrls, &StartLaw::Spec, self.class.horizon);
        expected_cost(self.spec, &run, self.g)
    }
}

impl CostFunction for DeviationProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.cost_of(p))
    }
}

impl Gradient for DeviationProblem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(p.central_diff(&|x| self.cost_of(x)))
    }
}

fn bfgs(problem: DeviationProblem<'_>, start: Vec<f64>, cfg: &SearchConfig) -> (Vec<f64>, f64) {
    let fallback_cost = problem.cost_of(&start);
    let k = start.len();
    let inv_hessian: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let solver = BFGS::new(MoreThuenteLineSearch::new())
        .with_tolerance_grad(cfg.grad_tol)
        .and_then(|s| s.with_tolerance_cost(1e-15));
    let Ok(solver) = solver else {
        return (start, fallback_cost);
    };
    let result = Executor::new(problem, solver)
        .configure(|st| st.param(start.clone()).inv_hessian(inv_hessian).max_iters(cfg.max_iters))
        .run();
    match result {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) if st.get_best_cost() < fallback_cost => (p.clone(), st.get_best_cost()),
                _ => (start, fallback_cost),
            }
        }
        Err(_) => (start, fallback_cost),
    }
}

/// Gap of group `g`'s representative member within the history class,
/// all others playing the SEBEU profile.
pub fn eps_gap_lq_affine(spec: &LqGameSpec, profile: &SebeuFinite, g: usize, cfg: &SearchConfig) -> Result<GapEntry> {
    let dev_spec = deviator_spec(spec, g)?;
    let mut ctrls = profile.controllers();
    if dev_spec.groups.len() != spec.groups.len() {
        ctrls.insert(g, ctrls[g].clone());
    }
    let grp = &spec.groups[g];
    let class = HistoryClass { horizon: profile.horizon(), n: grp.n(), m: grp.m(), p: spec.env_dim };
    let base = class
        .embed(&ctrls[g])
        .ok_or_else(|| Error::Unsupported("SEBEU controller is not expressible in the history class".into()))?;
    let problem = DeviationProblem { spec: &dev_spec, g, class, others: &ctrls };
    let sebeu_cost = problem.cost_of(&base);
    if !sebeu_cost.is_finite() {
        return Err(Error::InvalidValue { field: "sebeu_cost".into(), message: "not finite".into() });
    }
    let starts: Vec<Vec<f64>> = (0..cfg.starts.max(1) as u64)
        .map(|s| {
            if s == 0 {
                return base.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s);
            base.iter().map(|b| b + cfg.start_scale * (1.0 + b.abs()) * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let results: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|start| bfgs(DeviationProblem { spec: &dev_spec, g, class, others: &ctrls }, start, cfg))
        .collect();
    let (mut deviation, mut deviation_cost) = (base, sebeu_cost);
    for (p, c) in results {
        if c < deviation_cost {
            deviation = p;
            deviation_cost = c;
        }
    }
    Ok(GapEntry { n_dm: spec.n_dm, dm: g, sebeu_cost, deviation_cost, gap: sebeu_cost - deviation_cost, deviation })
}

/// Gaps for every group's representative member.
pub fn eps_gap_lq(spec: &LqGameSpec, profile: &SebeuFinite, cfg: &SearchConfig) -> Result<GapReport> {
    let entries = (0..spec.groups.len()).map(|g| eps_gap_lq_affine(spec, profile, g, cfg)).collect::<Result<Vec<_>>>()?;
    let max_gap = entries.iter().map(|e| e.gap).fold(0.0, f64::max);
    Ok(GapReport { class: "affine in own states and environment history".into(), entries, max_gap })
}

/// Exact best-response gains of one DM in the scalar two-stage family when
/// the others play the SEBEU, together with the SEBEU gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example2Response {
    pub f0: f64,
    pub f1: f64,
    pub k1: f64,
    pub f0_tilde: f64,
    pub f1_tilde: f64,
    pub k1_tilde: f64,
    pub n1_tilde: f64,
}

/// Closed-form gains for the two-stage scalar family with `N` DMs.
pub fn example2_nash_response(pr: &Example2Params, n: usize) -> Example2Response {
    assert!(n >= 1 && pr.r > 0.0 && pr.q > 0.0, "closed forms need N >= 1 and positive weights");
    let (a, b, q, r) = (pr.a, pr.b, pr.q, pr.r);
    let nf = n as f64;
    // SEBEU: exo-optimal feedback gains and the environment gain on y_0.
    let f1 = -q * b * a / (r + q * b * b);
    let m1 = q + q * a * a - (q * a * b).powi(2) / (r + q * b * b);
    let f0 = -b * m1 * a / (r + b * b * m1);
    let cov_bar = pr.x0_var / nf;
    let k1 = -1.0 / (1.0 + r + q * b * b) * f1 * (a + b * f0) * cov_bar * f0 / (cov_bar * f0 * f0 + pr.xi_var);
    // Best response of one DM to everybody else at the SEBEU.
    let cov_rest = (nf - 1.0) * pr.x0_var / (nf * nf);
    let den = r + q * b * b + 2.0 / nf;
    let reg = f0 * cov_rest / (f0 * f0 * cov_rest + pr.xi_var);
    let f1t = -q * b * a / den;
    let k1t = -f1 * (a + b * f0) / den * reg - k1 * (nf - 1.0) / nf / den;
    let n1t = f1 * (a + b * f0) / den * reg / nf;
    let lin = f1t * b + k1t / nf + n1t;
    let num = q * b * a
        + (r + 2.0 / nf) * f1t * a * lin
        + 2.0 * f1t * a * ((nf - 1.0) / nf) * k1 / nf
        + q * (a + b * f1t) * a * b * (a + b * f1t + k1t / nf + n1t);
    let dd = r + 2.0 / nf + q * b * b + (r + 2.0 / nf) * lin * lin + 2.0 * lin * ((nf - 1.0) / nf) * k1 / nf + q * b * b * (a + b * f1t + k1t / nf + n1t).powi(2);
    Example2Response { f0, f1, k1, f0_tilde: -num / dd, f1_tilde: f1t, k1_tilde: k1t, n1_tilde: n1t }
}

/// Outcome of perturbing the mean-field policy of one DM facing the
/// i.i.d. environment the population generates.
#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldNashCheck {
    pub equilibrium_cost: f64,
    pub best_perturbed_cost: f64,
    /// `equilibrium_cost - best_perturbed_cost`; positive means a
    /// profitable deviation was found.
    pub max_improvement: f64,
    pub perturbations: usize,
    /// Perturbations skipped because they destabilized the DM's loop.
    pub unstable: usize,
}

/// Random perturbations of the feedback, forecast and offset gains of the
/// mean-field policy, evaluated exactly against `N(y_hat, cov xi)` i.i.d.
/// A single DM cannot move the population averages, so SEBEU and Nash
/// coincide exactly when none of them helps.
pub fn mean_field_nash_check(spec: &LqGameSpec, mf: &MeanFieldSolution, perturbations: usize, scale: f64, seed: u64) -> Result<MeanFieldNashCheck> {
    let grp = &spec.groups[0];
    let own = OwnNoise::member_of(spec, 0);
    let env = mf.deviator_env(spec);
    let equilibrium_cost = eval_exo_cost_infinite(&mf.policy, grp, &own, &env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |m: &Mat| m.map(|v| v + scale * (1.0 + v.abs()) * rng.random_range(-1.0..1.0));
    let mut best = f64::INFINITY;
    let mut unstable = 0;
    for _ in 0..perturbations {
        let mut pol = mf.policy.clone();
        pol.f = jitter(&pol.f);
        pol.g0 = jitter(&pol.g0);
        pol.h = jitter(&Mat::from_column_slice(pol.h.len(), 1, pol.h.as_slice())).column(0).into_owned();
        let closed = &grp.stage(0).a + &grp.stage(0).b * &pol.f;
        if crate::linalg::spectral_radius(&(closed * grp.beta.sqrt())) >= 1.0 {
            unstable += 1;
            continue;
        }
        match eval_exo_cost_infinite(&pol, grp, &own, &env) {
            Ok(c) => best = best.min(c),
            Err(_) => unstable += 1,
        }
    }
    Ok(MeanFieldNashCheck { equilibrium_cost, best_perturbed_cost: best, max_improvement: equilibrium_cost - best, perturbations, unstable })
}

/// Gap of a single-group game as the population size varies; each member
/// keeps its individual law.
pub fn sweep_population(spec: &LqGameSpec, grid: &[usize], cfg: &SearchConfig) -> Result<Vec<GapEntry>> {
    if spec.groups.len() != 1 {
        return Err(Error::Unsupported(format!("population sweeps need a single group, found {}", spec.groups.len())));
    }
    grid.par_iter()
        .map(|&n| {
            let scaled = spec.with_group_count(0, n)?;
            let prof = build_sebeu_finite(&scaled)?;
            eps_gap_lq_affine(&scaled, &prof, 0, cfg)
        })
        .collect()
}

/// `N,dm,sebeu_cost,deviation_cost,gap` rows.
pub fn write_gap_csv(entries: &[GapEntry], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "N,dm,sebeu_cost,deviation_cost,gap")?;
    for e in entries {
        writeln!(out, "{},{},{:.16e},{:.16e},{:.16e}", e.n_dm, e.dm, e.sebeu_cost, e.deviation_cost, e.gap)?;
    }
    Ok(())
}

/// Per-DM deviation gaps of a mixed profile in a finite game, by full
/// enumeration of unilateral pure deviations.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteGap<W> {
    pub cost: Vec<W>,
    pub best_deviation_cost: Vec<W>,
    pub best_deviation: Vec<usize>,
    pub gap: Vec<W>,
}

pub fn eps_gap_finite_game<W: Weight>(spec: &FiniteGameSpec, profile: &MixedProfile<W>) -> Result<FiniteGap<W>> {
    let size = spec.joint_index().total();
    if size > crate::finite_eq::ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { size, budget: crate::finite_eq::ENUMERATION_BUDGET });
    }
    let mut out = FiniteGap { cost: Vec::new(), best_deviation_cost: Vec::new(), best_deviation: Vec::new(), gap: Vec::new() };
    for i in 0..spec.n_dm {
        let per_action: Vec<W> = (0..spec.actions[i].len())
            .map(|a| {
                let law = conditional_env_distribution(spec, profile, i, a);
                action_costs(spec, i, &law)[a].clone()
            })
            .collect();
        let cost = per_action.iter().zip(&profile[i]).fold(W::zero(), |acc, (c, p)| acc + c.clone() * p.clone());
        let (best_a, best) = per_action.iter().enumerate().skip(1).fold((0, per_action[0].clone()), |(ba, bc), (a, c)| if *c < bc { (a, c.clone()) } else { (ba, bc) });
        out.gap.push(cost.clone() - best.clone());
        out.cost.push(cost);
        out.best_deviation_cost.push(best);
        out.best_deviation.push(best_a);
    }
    Ok(out)
}

/// Exact gaps at a pure profile.
pub fn eps_gap_pure(spec: &FiniteGameSpec, u: &[usize]) -> Result<FiniteGap<BigRational>> {
    eps_gap_finite_game(spec, &crate::finite_eq::pure_profile::<BigRational>(spec, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn unit() -> Example2Params {
        Example2Params::unit()
    }

    #[test]
    fn closed_form_small_and_large_n() {
        let one = example2_nash_response(&unit(), 1);
        assert!((one.f0 + 0.6).abs() < 1e-15 && (one.f1 + 0.5).abs() < 1e-15);
        assert!((one.k1 + 1.0 / 34.0).abs() < 1e-15);
        assert!((one.f1_tilde + 0.25).abs() < 1e-15);
        assert_eq!(one.n1_tilde, 0.0);
        let big = example2_nash_response(&unit(), 1_000_000);
        assert!((big.f0_tilde - big.f0).abs() < 1e-4 && (big.f1_tilde - big.f1).abs() < 1e-5);
        assert!(big.k1_tilde.abs() < 1e-5 && big.n1_tilde.abs() < 1e-5);
    }

    #[test]
    fn history_class_reproduces_sebeu_cost() {
        let spec = scenarios::example2(&unit(), 1);
        let prof = build_sebeu_finite(&spec).unwrap();
        let ctrls = prof.controllers();
        let class = HistoryClass { horizon: 2, n: 1, m: 1, p: 1 };
        let theta = class.embed(&ctrls[0]).unwrap();
        let direct = expected_cost(&spec, &propagate_moments(&spec, &ctrls, &StartLaw::Spec, 2), 0);
        let via = expected_cost(&spec, &propagate_moments(&spec, &[class.controller(&theta)], &StartLaw::Spec, 2), 0);
        assert!((direct - via).abs() < 1e-13);
        assert!((theta[6] + 1.0 / 34.0).abs() < 1e-12);
    }

    #[test]
    fn single_dm_search_matches_closed_form() {
        let spec = scenarios::example2(&unit(), 1);
        let prof = build_sebeu_finite(&spec).unwrap();
        let entry = eps_gap_lq_affine(&spec, &prof, 0, &SearchConfig::default()).unwrap();
        let cf = example2_nash_response(&unit(), 1);
        let class = HistoryClass { horizon: 2, n: 1, m: 1, p: 1 };
        let theta = class.scalar_two_stage(cf.f0_tilde, cf.f1_tilde, cf.k1_tilde, cf.n1_tilde);
        let cost = expected_cost(&spec, &propagate_moments(&spec, &[class.controller(&theta)], &StartLaw::Spec, 2), 0);
        assert!(entry.gap > 1e-3);
        assert!((entry.deviation_cost - cost).abs() < 1e-6, "search {} vs closed form {}", entry.deviation_cost, cost);
    }

    #[test]
    fn decoupled_spec_has_no_gap() {
        let mut spec = scenarios::example2(&unit(), 3);
        spec.env[0].e1[0].fill(0.0);
        let prof = build_sebeu_finite(&spec).unwrap();
        let entry = eps_gap_lq_affine(&spec, &prof, 0, &SearchConfig { starts: 2, ..SearchConfig::default() }).unwrap();
        assert!(entry.gap.abs() < 1e-9, "{}", entry.gap);
    }

    #[test]
    fn gap_shrinks_with_population() {
        let spec = scenarios::example2(&unit(), 1);
        let rows = sweep_population(&spec, &[1, 16, 256], &SearchConfig { starts: 3, ..SearchConfig::default() }).unwrap();
        assert_eq!(rows[2].n_dm, 256);
        assert!(rows[0].gap > 10.0 * rows[2].gap, "{:?}", rows.iter().map(|r| r.gap).collect::<Vec<_>>());
        assert!(rows[1].gap > rows[2].gap);
    }

    #[test]
    fn mean_field_policy_is_nash() {
        let mut spec = scenarios::scalar_stationary(0.0);
        spec.groups[0].count = 1000;
        spec.n_dm = 1000;
        spec.env[0].e1[0][(0, 0)] = 0.3;
        spec.groups[0].stages[0].k[(0, 0)] = 0.2;
        let mf = crate::sebeu_lq::solve_mean_field(&spec).unwrap();
        let chk = mean_field_nash_check(&spec, &mf, 100, 1e-2, 3).unwrap();
        assert!(chk.max_improvement <= 1e-10, "{chk:?}");
        assert!(chk.unstable < 100);
    }

    #[test]
    fn example1_gaps() {
        let spec = scenarios::example1(2);
        let g = eps_gap_pure(&spec, &[2, 0]).unwrap();
        assert_eq!(g.gap[0], BigRational::new(1.into(), 2.into()));
        let ones = eps_gap_pure(&spec, &[1, 1]).unwrap();
        assert!(ones.gap.iter().all(|x| *x == BigRational::from_integer(0.into())));
    }
}
