//! Ready-made game specifications: the demand-response game, the scalar
//! two-stage LQ family, stationary test instances and seeded random specs.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Mat, Vector};
use crate::model::{DmGroup, DmStage, EnvStage, FiniteGameSpec, Horizon, LqGameSpec, Noise};

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Demand-response game: `N` consumers choose `u in {0,1,2}`, the price is
/// the average consumption and each pays `u*y - u`.
pub fn example1(n: usize) -> FiniteGameSpec {
    let actions = vec![vec!["0".to_string(), "1".into(), "2".into()]; n];
    let env_values: Vec<BigRational> = (0..=2 * n).map(|s| ratio(s as i64, n as i64)).collect();
    let idx = crate::model::JointIndex::new(&vec![3; n]);
    let outcome = (0..idx.total() as usize)
        .map(|s| idx.decode(s).iter().sum::<usize>())
        .collect();
    let table: Vec<Vec<BigRational>> = (0..3)
        .map(|u| env_values.iter().map(|y| BigRational::from_integer(u.into()) * (y - BigRational::one())).collect())
        .collect();
    FiniteGameSpec {
        n_dm: n,
        actions,
        env_values,
        disturbance_labels: vec!["0".into()],
        disturbance_pmf: vec![BigRational::one()],
        outcome,
        cost: vec![table; n],
    }
}

/// Two DMs whose environment reveals both actions (`y = 2 u1 + u2`); DM 0
/// pays 1 unless it matches DM 1, DM 1 pays 1 unless it mismatches.
pub fn matching_pennies() -> FiniteGameSpec {
    let env_values: Vec<BigRational> = (0..4).map(|v| BigRational::from_integer(v.into())).collect();
    let outcome = vec![0, 1, 2, 3];
    let cost_for = |want_match: bool| -> Vec<Vec<BigRational>> {
        (0..2)
            .map(|own| {
                (0..4)
                    .map(|y| {
                        let other = if want_match { y % 2 } else { y / 2 };
                        let hit = if want_match { own == other } else { own != other };
                        if hit { BigRational::zero() } else { BigRational::one() }
                    })
                    .collect()
            })
            .collect()
    };
    FiniteGameSpec {
        n_dm: 2,
        actions: vec![vec!["0".into(), "1".into()]; 2],
        env_values,
        disturbance_labels: vec!["0".into()],
        disturbance_pmf: vec![BigRational::one()],
        outcome,
        cost: vec![cost_for(true), cost_for(false)],
    }
}

/// Scalar parameters of the two-stage LQ family with price `y = avg(u) + xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example2Params {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    /// Variance of one DM's initial state.
    pub x0_var: f64,
    /// Variance of one DM's process noise.
    pub w_var: f64,
    pub xi_var: f64,
    pub horizon: usize,
}

impl Example2Params {
    pub fn unit() -> Self {
        Example2Params { a: 1.0, b: 1.0, q: 1.0, r: 1.0, x0_var: 1.0, w_var: 1.0, xi_var: 1.0, horizon: 2 }
    }
}

fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

/// `N` identical DMs as one group whose noise law is that of the average.
pub fn example2(p: &Example2Params, n: usize) -> LqGameSpec {
    let nf = n as f64;
    let stage = DmStage { a: s(p.a), b: s(p.b), c: s(0.0), q: s(p.q), r: s(p.r), k: s(1.0), l: s(0.0) };
    LqGameSpec {
        n_dm: n,
        horizon: Horizon::Finite(p.horizon),
        env_dim: 1,
        env_state_dim: 0,
        groups: vec![DmGroup { count: n, beta: 1.0, stages: vec![stage], q_terminal: Some(s(p.q)) }],
        env: vec![EnvStage {
            a0: Mat::zeros(0, 0),
            d: Mat::zeros(1, 0),
            b1: vec![Mat::zeros(0, 1)],
            b2: vec![Mat::zeros(0, 1)],
            e1: vec![s(1.0)],
            e2: vec![s(0.0)],
        }],
        noise: Noise {
            x0_mean: Vector::zeros(1),
            x0_cov: s(p.x0_var / nf),
            y_prev_mean: Vector::zeros(1),
            y_prev_cov: s(0.0),
            y_prev_x0_cov: s(0.0),
            w_mean: Vector::zeros(1),
            w_cov: s(p.w_var / nf),
            xi_mean: Vector::zeros(1),
            xi_cov: s(p.xi_var),
            iid: true,
        },
    }
}

/// All-zero primitives with the dimensions of `spec`.
pub fn zero_noise(spec: &LqGameSpec) -> Noise {
    let (d, p) = (spec.state_dim(), spec.env_dim);
    Noise {
        x0_mean: Vector::zeros(d),
        x0_cov: Mat::zeros(d, d),
        y_prev_mean: Vector::zeros(p),
        y_prev_cov: Mat::zeros(p, p),
        y_prev_x0_cov: Mat::zeros(p, d),
        w_mean: Vector::zeros(d),
        w_cov: Mat::zeros(d, d),
        xi_mean: Vector::zeros(p),
        xi_cov: Mat::zeros(p, p),
        iid: true,
    }
}

/// One scalar DM, infinite horizon, every coupling coefficient set to
/// `coupling`; nonzero noise means so the stationary mean is nontrivial.
pub fn scalar_stationary(coupling: f64) -> LqGameSpec {
    let e = coupling;
    let stage = DmStage { a: s(0.8), b: s(1.0), c: s(e), q: s(1.0), r: s(1.0), k: s(e), l: s(e) };
    LqGameSpec {
        n_dm: 1,
        horizon: Horizon::Infinite,
        env_dim: 1,
        env_state_dim: 0,
        groups: vec![DmGroup { count: 1, beta: 0.9, stages: vec![stage], q_terminal: None }],
        env: vec![EnvStage {
            a0: Mat::zeros(0, 0),
            d: Mat::zeros(1, 0),
            b1: vec![Mat::zeros(0, 1)],
            b2: vec![Mat::zeros(0, 1)],
            e1: vec![s(e)],
            e2: vec![s(e)],
        }],
        noise: Noise {
            x0_mean: Vector::zeros(1),
            x0_cov: s(1.0),
            y_prev_mean: Vector::zeros(1),
            y_prev_cov: s(1.0),
            y_prev_x0_cov: s(0.0),
            w_mean: Vector::from_element(1, 0.1),
            w_cov: s(0.5),
            xi_mean: Vector::from_element(1, 0.2),
            xi_cov: s(1.0),
            iid: true,
        },
    }
}

/// Two scalar DMs and a scalar environment state, infinite horizon, weak
/// coupling of size `coupling`.
pub fn two_dm_stationary(coupling: f64) -> LqGameSpec {
    let e = coupling;
    let dm = |a: f64, b: f64, q: f64, r: f64, beta: f64| DmGroup {
        count: 1,
        beta,
        stages: vec![DmStage { a: s(a), b: s(b), c: s(e), q: s(q), r: s(r), k: s(e), l: s(0.5 * e) }],
        q_terminal: None,
    };
    let d = 3;
    let mut x0_cov = Mat::identity(d, d);
    x0_cov[(0, 0)] = 0.5;
    let mut w_cov = Mat::identity(d, d) * 0.3;
    w_cov[(1, 2)] = 0.05;
    w_cov[(2, 1)] = 0.05;
    LqGameSpec {
        n_dm: 2,
        horizon: Horizon::Infinite,
        env_dim: 1,
        env_state_dim: 1,
        groups: vec![dm(0.9, 1.0, 1.0, 2.0, 0.95), dm(1.1, 0.5, 2.0, 1.0, 0.9)],
        env: vec![EnvStage {
            a0: s(0.5),
            d: s(1.0),
            b1: vec![s(e), s(-e)],
            b2: vec![s(e), s(e)],
            e1: vec![s(e), s(0.5 * e)],
            e2: vec![s(-e), s(e)],
        }],
        noise: Noise {
            x0_mean: Vector::from_vec(vec![0.0, 0.1, -0.1]),
            x0_cov,
            y_prev_mean: Vector::zeros(1),
            y_prev_cov: s(1.0),
            y_prev_x0_cov: Mat::zeros(1, d),
            w_mean: Vector::from_vec(vec![0.05, 0.1, -0.2]),
            w_cov,
            xi_mean: Vector::from_element(1, 0.3),
            xi_cov: s(0.8),
            iid: true,
        },
    }
}

fn uniform_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = uniform_mat(rng, n, n, 1.0);
    &g * g.transpose() + Mat::identity(n, n) * floor
}

/// Knobs for [`random_weakly_coupled`].
#[derive(Debug, Clone)]
pub struct RandomSpecConfig {
    pub horizon: Horizon,
    pub max_groups: usize,
    pub max_state: usize,
    pub max_control: usize,
    pub max_env: usize,
    /// Magnitude of every coupling block (B1, B2, E1, E2, C, K, L).
    pub coupling: f64,
}

impl RandomSpecConfig {
    pub fn finite(t: usize) -> Self {
        RandomSpecConfig { horizon: Horizon::Finite(t), max_groups: 3, max_state: 2, max_control: 2, max_env: 2, coupling: 0.3 }
    }
}

/// Seeded random LQ game with weak coupling, nonzero noise means, an
/// informative `y_{-1}` correlated with `X_0`, and time-varying stages when
/// the horizon is finite.
pub fn random_weakly_coupled(seed: u64, cfg: &RandomSpecConfig) -> LqGameSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_groups = rng.random_range(1..=cfg.max_groups);
    let p = rng.random_range(1..=cfg.max_env);
    let n0 = rng.random_range(0..=1usize);
    let t_stages = match cfg.horizon {
        Horizon::Finite(t) => {
            if rng.random_bool(0.5) { t } else { 1 }
        }
        Horizon::Infinite => 1,
    };
    let e = cfg.coupling;
    let mut groups = Vec::new();
    for _ in 0..n_groups {
        let n = rng.random_range(1..=cfg.max_state);
        let m = rng.random_range(1..=cfg.max_control);
        let count = rng.random_range(1..=3usize);
        let beta = match cfg.horizon {
            Horizon::Finite(_) => rng.random_range(0.8..=1.0),
            Horizon::Infinite => rng.random_range(0.8..0.95),
        };
        let stages = (0..t_stages)
            .map(|_| DmStage {
                a: uniform_mat(&mut rng, n, n, 0.9),
                b: uniform_mat(&mut rng, n, m, 1.0),
                c: uniform_mat(&mut rng, n, p, e),
                q: random_spd(&mut rng, n, 0.5),
                r: random_spd(&mut rng, m, 0.5),
                k: uniform_mat(&mut rng, p, m, e),
                l: uniform_mat(&mut rng, p, n, e),
            })
            .collect();
        let q_terminal = cfg.horizon.finite().map(|_| random_spd(&mut rng, n, 0.5));
        groups.push(DmGroup { count, beta, stages, q_terminal });
    }
    let env = (0..t_stages)
        .map(|_| EnvStage {
            a0: uniform_mat(&mut rng, n0, n0, 0.6),
            d: uniform_mat(&mut rng, p, n0, 1.0),
            b1: groups.iter().map(|g| uniform_mat(&mut rng, n0, g.m(), e)).collect(),
            b2: groups.iter().map(|g| uniform_mat(&mut rng, n0, g.n(), e)).collect(),
            e1: groups.iter().map(|g| uniform_mat(&mut rng, p, g.m(), e)).collect(),
            e2: groups.iter().map(|g| uniform_mat(&mut rng, p, g.n(), e)).collect(),
        })
        .collect();
    let d = n0 + groups.iter().map(|g| g.n()).sum::<usize>();
    // Joint law of (y_{-1}, X_0) from a random factor so it is PSD and correlated.
    let joint = random_spd(&mut rng, p + d, 0.2) * 0.5;
    let noise = Noise {
        x0_mean: Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        x0_cov: joint.view((p, p), (d, d)).into_owned(),
        y_prev_mean: Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)),
        y_prev_cov: joint.view((0, 0), (p, p)).into_owned(),
        y_prev_x0_cov: joint.view((0, p), (p, d)).into_owned(),
        w_mean: Vector::from_fn(d, |_, _| rng.random_range(-0.5..0.5)),
        w_cov: random_spd(&mut rng, d, 0.1) * 0.2,
        xi_mean: Vector::from_fn(p, |_, _| rng.random_range(-0.5..0.5)),
        xi_cov: random_spd(&mut rng, p, 0.3) * 0.5,
        iid: true,
    };
    let n_dm = groups.iter().map(|g| g.count).sum();
    LqGameSpec { n_dm, horizon: cfg.horizon, env_dim: p, env_state_dim: n0, groups, env, noise }
}

/// Seeded random time-invariant `(A, B, Q, R, beta)` block with `(A, B)`
/// stabilizable, `A` possibly unstable; coupling blocks are random too.
pub fn random_stabilizable_group(seed: u64, n: usize, m: usize, p: usize, horizon: Horizon) -> DmGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = uniform_mat(&mut rng, n, n, 1.2);
        let b = uniform_mat(&mut rng, n, m, 1.0);
        if linalg::uncontrollable_unstable_mode(&a, &b, 1e-6).is_some() {
            continue;
        }
        let q = random_spd(&mut rng, n, 0.5);
        let stage = DmStage {
            c: uniform_mat(&mut rng, n, p, 0.5),
            q: q.clone(),
            r: random_spd(&mut rng, m, 0.5),
            k: uniform_mat(&mut rng, p, m, 0.5),
            l: uniform_mat(&mut rng, p, n, 0.5),
            a,
            b,
        };
        return DmGroup {
            count: 1,
            beta: rng.random_range(0.5..0.95),
            stages: vec![stage],
            q_terminal: horizon.finite().map(|_| q),
        };
    }
}
