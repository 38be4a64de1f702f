//! Equilibria of single-stage games with finite action sets.
//!
//! Pure-profile enumerations (SEBEU, Kalai-style subjective equilibria and
//! Nash) run in exact rational arithmetic. The damped best-reply iteration
//! for mixed SEBEU runs in `f64`. Probability computations are generic over
//! [`Weight`] so the same enumeration code serves both.

use std::ops::{Add, Mul, Sub};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FiniteGameSpec;

/// Default cap on `|joint actions| * |disturbances|`.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// Tie tolerance for `f64` best replies.
pub const FLOAT_TIE_TOL: f64 = 1e-12;

/// Scalar used for probabilities and expected costs.
pub trait Weight: Clone + Zero + One + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn from_rational(r: &BigRational) -> Self;
    /// Equality up to the scalar's tie tolerance.
    fn ties(&self, other: &Self) -> bool;
}

impl Weight for f64 {
    fn from_rational(r: &BigRational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn ties(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TIE_TOL
    }
}

impl Weight for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn ties(&self, other: &Self) -> bool {
        self == other
    }
}

/// `gamma[i][a]`: probability that DM `i` plays action `a`.
pub type MixedProfile<W> = Vec<Vec<W>>;

/// Point-mass profile.
pub fn pure_profile<W: Weight>(spec: &FiniteGameSpec, u: &[usize]) -> MixedProfile<W> {
    spec.actions
        .iter()
        .zip(u)
        .map(|(set, &a)| (0..set.len()).map(|b| if a == b { W::one() } else { W::zero() }).collect())
        .collect()
}

pub fn uniform_profile(spec: &FiniteGameSpec) -> MixedProfile<f64> {
    spec.actions.iter().map(|set| vec![1.0 / set.len() as f64; set.len()]).collect()
}

fn check_budget(spec: &FiniteGameSpec, budget: u128) -> Result<()> {
    let size = spec.joint_index().total().saturating_mul(spec.n_disturbances() as u128);
    if size > budget {
        return Err(Error::BudgetExceeded { size, budget });
    }
    Ok(())
}

/// Law of `y` when DMs play `profile`, optionally with DM `fixed.0` forced
/// to action `fixed.1`.
fn env_law<W: Weight>(spec: &FiniteGameSpec, profile: &MixedProfile<W>, fixed: Option<(usize, usize)>) -> Vec<W> {
    let idx = spec.joint_index();
    let n_xi = spec.n_disturbances();
    let pxi: Vec<W> = spec.disturbance_pmf.iter().map(W::from_rational).collect();
    let mut law = vec![W::zero(); spec.env_values.len()];
    for joint in 0..idx.total() as usize {
        let mut w = W::one();
        for (i, gamma) in profile.iter().enumerate() {
            let a = idx.action_of(joint, i);
            match fixed {
                Some((fi, fa)) if fi == i => {
                    if a != fa {
                        w = W::zero();
                    }
                }
                _ => w = w * gamma[a].clone(),
            }
            if w.is_zero() {
                break;
            }
        }
        if w.is_zero() {
            continue;
        }
        for (xi, p) in pxi.iter().enumerate() {
            let y = spec.outcome[joint * n_xi + xi];
            law[y] = law[y].clone() + w.clone() * p.clone();
        }
    }
    law
}

/// The objective law of `y` induced by a mixed profile.
pub fn induced_env_distribution<W: Weight>(spec: &FiniteGameSpec, profile: &MixedProfile<W>) -> Vec<W> {
    env_law(spec, profile, None)
}

/// The law of `y` when DM `i` plays `action` and the others follow `profile`.
pub fn conditional_env_distribution<W: Weight>(spec: &FiniteGameSpec, profile: &MixedProfile<W>, i: usize, action: usize) -> Vec<W> {
    env_law(spec, profile, Some((i, action)))
}

/// Expected cost of each of DM `i`'s actions against a belief over `y`.
pub fn action_costs<W: Weight>(spec: &FiniteGameSpec, i: usize, belief: &[W]) -> Vec<W> {
    spec.cost[i]
        .iter()
        .map(|row| row.iter().zip(belief).fold(W::zero(), |acc, (c, p)| acc + W::from_rational(c) * p.clone()))
        .collect()
}

/// All optimal pure actions of DM `i` against `belief` (ascending) and the
/// optimal value.
pub fn best_reply_to_belief<W: Weight>(spec: &FiniteGameSpec, i: usize, belief: &[W]) -> (Vec<usize>, W) {
    let costs = action_costs(spec, i, belief);
    let best = costs.iter().skip(1).fold(costs[0].clone(), |m, c| if *c < m { c.clone() } else { m });
    let arg = (0..costs.len()).filter(|&a| costs[a].ties(&best) || costs[a] < best).collect();
    (arg, best)
}

fn pure_filter(spec: &FiniteGameSpec, budget: u128, keep: impl Fn(&[usize]) -> bool) -> Result<Vec<Vec<usize>>> {
    check_budget(spec, budget)?;
    let idx = spec.joint_index();
    Ok((0..idx.total() as usize).map(|s| idx.decode(s)).filter(|u| keep(u)).collect())
}

/// Law of `y` at a pure profile (only the disturbance is random).
pub fn pure_env_law(spec: &FiniteGameSpec, u: &[usize]) -> Vec<BigRational> {
    let joint = spec.joint_index().encode(u);
    let mut law = vec![BigRational::zero(); spec.env_values.len()];
    for (xi, p) in spec.disturbance_pmf.iter().enumerate() {
        law[spec.outcome_of(joint, xi)] += p;
    }
    law
}

/// Pure SEBEU: every action is a best reply to the law the profile induces.
pub fn is_pure_sebeu(spec: &FiniteGameSpec, u: &[usize]) -> bool {
    let law = pure_env_law(spec, u);
    (0..spec.n_dm).all(|i| best_reply_to_belief(spec, i, &law).0.contains(&u[i]))
}

/// Expected cost of DM `i` at the pure profile `u`, accounting for `i`'s
/// own influence on `y`.
pub fn pure_cost(spec: &FiniteGameSpec, u: &[usize], i: usize) -> BigRational {
    let law = pure_env_law(spec, u);
    spec.cost[i][u[i]].iter().zip(&law).fold(BigRational::zero(), |acc, (c, p)| acc + c * p)
}

/// Largest cost reduction DM `i` gets by a unilateral pure deviation from
/// `u` (zero when no deviation helps).
pub fn pure_deviation_gain(spec: &FiniteGameSpec, u: &[usize], i: usize) -> BigRational {
    let base = pure_cost(spec, u, i);
    let mut best = BigRational::zero();
    let mut dev = u.to_vec();
    for a in 0..spec.actions[i].len() {
        dev[i] = a;
        let gain = &base - pure_cost(spec, &dev, i);
        if gain > best {
            best = gain;
        }
    }
    best
}

pub fn is_pure_nash(spec: &FiniteGameSpec, u: &[usize]) -> bool {
    (0..spec.n_dm).all(|i| pure_deviation_gain(spec, u, i).is_zero())
}

/// Kalai-style support with free off-path beliefs: the on-path belief is the
/// true law at the played profile, and a deviation `a` refutes `u` only if
/// it beats the on-path cost for every possible `y`.
pub fn is_pure_kalai(spec: &FiniteGameSpec, u: &[usize]) -> bool {
    (0..spec.n_dm).all(|i| {
        let on_path = pure_cost(spec, u, i);
        (0..spec.actions[i].len()).filter(|&a| a != u[i]).all(|a| {
            let worst = spec.cost[i][a].iter().max().expect("nonempty environment set");
            *worst >= on_path
        })
    })
}

pub fn enumerate_pure_sebeu(spec: &FiniteGameSpec, budget: u128) -> Result<Vec<Vec<usize>>> {
    pure_filter(spec, budget, |u| is_pure_sebeu(spec, u))
}

pub fn enumerate_pure_nash(spec: &FiniteGameSpec, budget: u128) -> Result<Vec<Vec<usize>>> {
    pure_filter(spec, budget, |u| is_pure_nash(spec, u))
}

pub fn enumerate_pure_kalai(spec: &FiniteGameSpec, budget: u128) -> Result<Vec<Vec<usize>>> {
    pure_filter(spec, budget, |u| is_pure_kalai(spec, u))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub dm: usize,
    pub tv_change: f64,
    pub br_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixedIterationReport {
    pub profile: MixedProfile<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Law of `y` induced by the final profile.
    pub env_law: Vec<f64>,
    /// Per DM: expected cost of its worst support action minus the optimal
    /// value against the induced law.
    pub residuals: Vec<f64>,
    /// One row per DM and iteration (only the last `TRACE_TAIL` iterations
    /// are kept).
    pub trace: Vec<TraceRow>,
}

/// Iterations kept in the trace.
pub const TRACE_TAIL: usize = 200;

/// Support threshold used when measuring best-reply residuals.
const SUPPORT_TOL: f64 = 1e-9;

fn br_residuals(spec: &FiniteGameSpec, profile: &MixedProfile<f64>, law: &[f64]) -> Vec<f64> {
    (0..spec.n_dm)
        .map(|i| {
            let costs = action_costs(spec, i, law);
            let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
            profile[i]
                .iter()
                .zip(&costs)
                .filter(|(p, _)| **p > SUPPORT_TOL)
                .map(|(_, c)| c - best)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Damped best-reply iteration toward a mixed SEBEU. Non-convergence is a
/// reported outcome, not an error.
pub fn sebeu_fixed_point_iteration(
    spec: &FiniteGameSpec,
    start: MixedProfile<f64>,
    damping: f64,
    tol: f64,
    budget: usize,
) -> Result<MixedIterationReport> {
    check_budget(spec, ENUMERATION_BUDGET)?;
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidValue { field: "damping".into(), message: format!("{damping} is not in (0, 1]") });
    }
    let mut gamma = start;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=budget {
        iterations = it;
        let law = induced_env_distribution(spec, &gamma);
        let residuals = br_residuals(spec, &gamma, &law);
        let mut next = gamma.clone();
        let mut max_tv: f64 = 0.0;
        for i in 0..spec.n_dm {
            let (br, _) = best_reply_to_belief(spec, i, &law);
            let share = 1.0 / br.len() as f64;
            for (a, p) in next[i].iter_mut().enumerate() {
                let target = if br.contains(&a) { share } else { 0.0 };
                *p = (1.0 - damping) * *p + damping * target;
            }
            let tv = 0.5 * next[i].iter().zip(&gamma[i]).map(|(a, b)| (a - b).abs()).sum::<f64>();
            max_tv = max_tv.max(tv);
            trace.push(TraceRow { iter: it, dm: i, tv_change: tv, br_residual: residuals[i] });
        }
        if trace.len() > TRACE_TAIL * spec.n_dm {
            trace.drain(..spec.n_dm);
        }
        gamma = next;
        if max_tv <= tol {
            converged = true;
            break;
        }
    }
    let env_law = induced_env_distribution(spec, &gamma);
    let residuals = br_residuals(spec, &gamma, &env_law);
    let converged = converged && residuals.iter().all(|r| *r <= tol.max(FLOAT_TIE_TOL));
    Ok(MixedIterationReport { profile: gamma, converged, iterations, env_law, residuals, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn all_profiles(n: usize) -> Vec<Vec<usize>> {
        let idx = crate::model::JointIndex::new(&vec![3; n]);
        (0..idx.total() as usize).map(|s| idx.decode(s)).collect()
    }

    #[test]
    fn uniform_pair_law() {
        let spec = scenarios::example1(2);
        let gamma = vec![vec![r(1, 3); 3]; 2];
        let law = induced_env_distribution(&spec, &gamma);
        assert_eq!(law, vec![r(1, 9), r(2, 9), r(3, 9), r(2, 9), r(1, 9)]);
    }

    #[test]
    fn conditional_law_point_mass() {
        let spec = scenarios::example1(2);
        let gamma = pure_profile::<BigRational>(&spec, &[2, 1]);
        let law = conditional_env_distribution(&spec, &gamma, 0, 0);
        // y = (0 + 1) / 2 is env value index 1.
        assert_eq!(law[1], BigRational::one());
    }

    #[test]
    fn total_probability_over_own_action() {
        let spec = scenarios::example1(3);
        let gamma = vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8], vec![0.6, 0.0, 0.4]];
        let law = induced_env_distribution(&spec, &gamma);
        for i in 0..3 {
            let mut mix = vec![0.0; law.len()];
            for a in 0..3 {
                let c = conditional_env_distribution(&spec, &gamma, i, a);
                mix.iter_mut().zip(&c).for_each(|(m, x)| *m += gamma[i][a] * x);
            }
            assert!(mix.iter().zip(&law).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn best_replies_to_point_beliefs() {
        let spec = scenarios::example1(1);
        // env values for N = 1 are 0, 1, 2.
        let point = |k: usize| (0..3).map(|j| if j == k { BigRational::one() } else { BigRational::zero() }).collect::<Vec<_>>();
        assert_eq!(best_reply_to_belief(&spec, 0, &point(1)), (vec![0, 1, 2], BigRational::zero()));
        assert_eq!(best_reply_to_belief(&spec, 0, &point(2)), (vec![0], BigRational::zero()));
        assert_eq!(best_reply_to_belief(&spec, 0, &point(0)), (vec![2], r(-2, 1)));
    }

    #[test]
    fn example1_pairs() {
        let spec = scenarios::example1(2);
        assert_eq!(enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET).unwrap(), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(enumerate_pure_nash(&spec, ENUMERATION_BUDGET).unwrap(), vec![vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(enumerate_pure_kalai(&spec, ENUMERATION_BUDGET).unwrap().len(), 6);
        assert!(!is_pure_kalai(&spec, &[1, 2]));
        assert!(is_pure_sebeu(&spec, &[2, 0]) && !is_pure_nash(&spec, &[2, 0]));
    }

    #[test]
    fn example1_characterizations_up_to_six() {
        for n in 1..=6 {
            let spec = scenarios::example1(n);
            let sum = |u: &Vec<usize>| u.iter().sum::<usize>();
            let all = all_profiles(n);
            let want_sebeu: Vec<_> = all.iter().filter(|u| sum(u) == n).cloned().collect();
            let want_kalai: Vec<_> = all.iter().filter(|u| sum(u) <= n).cloned().collect();
            let want_nash: Vec<_> = all.iter().filter(|u| u.iter().all(|&a| a == 1) || sum(u) + 1 == n).cloned().collect();
            assert_eq!(enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET).unwrap(), want_sebeu, "N={n}");
            assert_eq!(enumerate_pure_kalai(&spec, ENUMERATION_BUDGET).unwrap(), want_kalai, "N={n}");
            assert_eq!(enumerate_pure_nash(&spec, ENUMERATION_BUDGET).unwrap(), want_nash, "N={n}");
        }
    }

    #[test]
    fn decoupled_game_gives_dominant_profiles() {
        // Costs that ignore y: DM 0 prefers action 2, DM 1 action 0.
        let mut spec = scenarios::example1(2);
        let ny = spec.env_values.len();
        spec.cost[0] = (0..3).map(|a| vec![BigRational::from_integer((2 - a as i64).into()); ny]).collect();
        spec.cost[1] = (0..3).map(|a| vec![BigRational::from_integer((a as i64).into()); ny]).collect();
        assert_eq!(enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET).unwrap(), vec![vec![2, 0]]);
        assert_eq!(enumerate_pure_nash(&spec, ENUMERATION_BUDGET).unwrap(), vec![vec![2, 0]]);
    }

    #[test]
    fn budget_is_enforced() {
        let spec = scenarios::example1(4);
        assert!(matches!(enumerate_pure_nash(&spec, 10), Err(Error::BudgetExceeded { size: 81, budget: 10 })));
    }

    #[test]
    fn uniform_start_is_already_a_mixed_sebeu() {
        // Expected cost a (E[y] - 1) vanishes for every action when E[y] = 1,
        // so the uniform profile is a fixed point with all DMs indifferent.
        let spec = scenarios::example1(2);
        let rep = sebeu_fixed_point_iteration(&spec, uniform_profile(&spec), 0.5, 1e-12, 1000).unwrap();
        assert!(rep.converged);
        assert!(rep.residuals.iter().all(|r| *r <= 1e-12));
        let mean: f64 = rep.env_law.iter().enumerate().map(|(k, p)| p * k as f64 / 2.0).sum();
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_start_moves_toward_average_one() {
        let spec = scenarios::example1(2);
        let start = pure_profile::<f64>(&spec, &[2, 2]);
        let rep = sebeu_fixed_point_iteration(&spec, start, 0.5, 1e-12, 10_000).unwrap();
        assert!(rep.converged, "{:?}", rep.residuals);
        let mean: f64 = rep.env_law.iter().enumerate().map(|(k, p)| p * k as f64 / 2.0).sum();
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matching_pennies_cycles() {
        let spec = scenarios::matching_pennies();
        let start = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        let rep = sebeu_fixed_point_iteration(&spec, start, 0.5, 1e-12, 500).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.trace.len(), TRACE_TAIL * 2);
    }

    #[test]
    fn relabeling_symmetry() {
        let spec = scenarios::example1(3);
        assert!(spec.is_symmetric());
        let set = enumerate_pure_nash(&spec, ENUMERATION_BUDGET).unwrap();
        for u in &set {
            let mut v = u.clone();
            v.rotate_left(1);
            assert!(set.contains(&v));
        }
    }
}
