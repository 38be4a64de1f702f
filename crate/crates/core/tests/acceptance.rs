//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with the
//! measured quantity and its pinned tolerance, then asserts.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sebeu::epsnash::{self, example2_nash_response, SearchConfig};
use sebeu::finite_eq::{enumerate_pure_kalai, enumerate_pure_nash, enumerate_pure_sebeu, pure_deviation_gain, ENUMERATION_BUDGET};
use sebeu::linalg;
use sebeu::lqr_exo::{eval_exo_cost, exo_gains_finite, riccati_algebraic, riccati_finite, ExoEnvLaw, FiniteExoPolicy, OwnNoise, RiccatiOptions};
use sebeu::model::Horizon;
use sebeu::scenarios::{self, Example2Params, RandomSpecConfig};
use sebeu::sebeu_lq::{build_sebeu_finite, build_sebeu_infinite_stationary, solve_mean_field, FixedPointOptions};
use sebeu::simulate::gaussian::GaussianLaw;
use sebeu::simulate::moments::{consistency_check, propagate_moments, stationarity_drift, StartLaw};
use sebeu::simulate::trajectories::simulate_trajectories;

type Mat = DMatrix<f64>;
type Vector = DVector<f64>;

const CLOSED_FORM_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-12;
const DECAY_RATIO: f64 = 10.0;
const DECAY_R2: f64 = 0.99;
const CONSISTENCY_TOL: f64 = 1e-8;
const PERTURBED_MIN_GAP: f64 = 1e-4;
const GRADIENT_REL_TOL: f64 = 1e-6;
const IMPROVEMENT_TOL: f64 = 1e-10;
const RICCATI_TOL: f64 = 1e-8;
const ARE_TOL: f64 = 1e-10;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const DRIFT_TOL: f64 = 1e-7;
const MC_SIGMAS: f64 = 4.0;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!("criterion {id:>2} [{name}] {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn profiles_where(n: usize, keep: impl Fn(&[usize]) -> bool) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    for code in 0..3usize.pow(n as u32) {
        let u: Vec<usize> = (0..n).rev().map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
        if keep(&u) {
            out.insert(u);
        }
    }
    out
}

#[test]
fn criterion_01_example1_sets() {
    let mut mismatches = Vec::new();
    for n in 1..=6 {
        let spec = scenarios::example1(n);
        let sum = |u: &[usize]| u.iter().sum::<usize>();
        let sebeu: BTreeSet<_> = enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET).unwrap().into_iter().collect();
        let nash: BTreeSet<_> = enumerate_pure_nash(&spec, ENUMERATION_BUDGET).unwrap().into_iter().collect();
        let kalai: BTreeSet<_> = enumerate_pure_kalai(&spec, ENUMERATION_BUDGET).unwrap().into_iter().collect();
        if sebeu != profiles_where(n, |u| sum(u) == n) {
            mismatches.push(format!("SEBEU N={n}"));
        }
        if kalai != profiles_where(n, |u| sum(u) <= n) {
            mismatches.push(format!("Kalai N={n}"));
        }
        if nash != profiles_where(n, |u| u.iter().all(|&a| a == 1) || sum(u) + 1 == n) {
            mismatches.push(format!("Nash N={n}"));
        }
    }
    report(1, "demand-response equilibrium sets, N = 1..6", mismatches.is_empty(), format!("exact; mismatches {mismatches:?}"));
}

#[test]
fn criterion_02_example1_eps_bound() {
    let mut bad = Vec::new();
    for n in 1..=6 {
        let spec = scenarios::example1(n);
        let one_over_n = BigRational::new(1.into(), (n as i64).into());
        for u in enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET).unwrap() {
            let max_gain = (0..n).map(|i| pure_deviation_gain(&spec, &u, i)).max().unwrap();
            let via_module = epsnash::eps_gap_pure(&spec, &u).unwrap().gap.into_iter().max().unwrap();
            if !(max_gain.is_zero() || max_gain == one_over_n) || via_module != max_gain {
                bad.push((u, max_gain));
            }
        }
    }
    report(2, "demand-response deviation gain in {0, 1/N}", bad.is_empty(), format!("exact; violations {bad:?}"));
}

#[test]
fn criterion_03_example2_closed_forms() {
    let spec = scenarios::example2(&Example2Params::unit(), 1);
    let prof = build_sebeu_finite(&spec).unwrap();
    let exo = &prof.exo[0];
    let ctrl = &prof.controllers()[0];
    let (ys, _) = ctrl.history_form(1).unwrap();
    let got = [ctrl.stage(0).f[(0, 0)], ctrl.stage(1).f[(0, 0)], exo.g(0, 0)[(0, 0)], exo.g(0, 1)[(0, 0)], exo.g(1, 1)[(0, 0)], ys[1][(0, 0)]];
    let want = [-3.0 / 5.0, -1.0 / 2.0, -2.0 / 5.0, 1.0 / 5.0, -1.0 / 2.0, -1.0 / 34.0];
    let err = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    report(3, "two-stage scalar closed forms f0 f1 g00 g01 g11 k1", err <= CLOSED_FORM_TOL, format!("max err {err:.2e}, tol {CLOSED_FORM_TOL:.0e}"));
}

#[test]
fn criterion_04_mean_value() {
    let mut worst: f64 = 0.0;
    for n in [1, 2, 7] {
        let spec = scenarios::example2(&Example2Params::unit(), n);
        let ctrls = build_sebeu_finite(&spec).unwrap().controllers();
        let run = propagate_moments(&spec, &ctrls, &StartLaw::Spec, 2);
        worst = worst.max(run.y[0].mean()[0].abs()).max(run.y[1].mean()[0].abs());
    }
    report(4, "two-stage scalar E[y0] = E[y1] = 0", worst <= MEAN_TOL, format!("max |E y| {worst:.2e}, tol {MEAN_TOL:.0e}"));
}

/// Coefficient of determination of the least-squares line `y = a + b x`.
fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn criterion_05_decay() {
    let spec = scenarios::example2(&Example2Params::unit(), 1);
    let rows = epsnash::sweep_population(&spec, &[1, 256], &SearchConfig::default()).unwrap();
    let ratio = rows[0].gap / rows[1].gap;
    let ns: Vec<usize> = (0..=30).map(|i| (100.0 * 10f64.powf(i as f64 / 10.0)).round() as usize).collect();
    let x: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let y: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let r = example2_nash_response(&Example2Params::unit(), n);
            r.k1_tilde.abs() + r.n1_tilde.abs()
        })
        .collect();
    let r2 = r_squared(&x, &y);
    report(
        5,
        "gap decay in N",
        ratio >= DECAY_RATIO && r2 >= DECAY_R2,
        format!("gap(1)/gap(256) = {ratio:.3e} (>= {DECAY_RATIO}), R^2 vs 1/N = {r2:.6} (>= {DECAY_R2})"),
    );
}

#[test]
fn criterion_06_consistency() {
    let (mut worst, mut weakest_perturbed) = (0.0f64, f64::INFINITY);
    for seed in 0..20 {
        let spec = scenarios::random_weakly_coupled(seed, &RandomSpecConfig::finite(3));
        let prof = build_sebeu_finite(&spec).unwrap();
        let ctrls = prof.controllers();
        let rep = consistency_check(&spec, &prof.belief, &ctrls, 3, CONSISTENCY_TOL);
        worst = worst.max(rep.mean_gap).max(rep.cov_gap);
        let mut bent = ctrls.clone();
        bent[0].stages[0].f.iter_mut().for_each(|v| *v += 1e-1);
        let off = consistency_check(&spec, &prof.belief, &bent, 3, CONSISTENCY_TOL);
        weakest_perturbed = weakest_perturbed.min(off.mean_gap.max(off.cov_gap));
    }
    report(
        6,
        "belief law equals actual law",
        worst <= CONSISTENCY_TOL && weakest_perturbed > PERTURBED_MIN_GAP,
        format!("max gap {worst:.2e} (tol {CONSISTENCY_TOL:.0e}), min perturbed gap {weakest_perturbed:.2e} (> {PERTURBED_MIN_GAP:.0e})"),
    );
}

fn random_env(seed: u64, p: usize, stages: usize) -> ExoEnvLaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p * (stages + 1);
    let g = Mat::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
    let mean = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    ExoEnvLaw::new(p, GaussianLaw { mean, cov: &g * g.transpose() }).unwrap()
}

fn params_mut(p: &mut FiniteExoPolicy) -> Vec<&mut f64> {
    let mut out: Vec<&mut f64> = Vec::new();
    for f in p.f.iter_mut() {
        out.extend(f.iter_mut());
    }
    for row in p.g.iter_mut() {
        for g in row.iter_mut() {
            out.extend(g.iter_mut());
        }
    }
    for h in p.h.iter_mut() {
        out.extend(h.iter_mut());
    }
    out
}

#[test]
fn criterion_07_exo_optimality() {
    let (mut worst_grad, mut worst_gain) = (0.0f64, f64::NEG_INFINITY);
    let t = 4;
    for seed in 0..20u64 {
        let dm = scenarios::random_stabilizable_group(seed, 2, 2, 2, Horizon::Finite(1));
        let w = Vector::from_vec(vec![0.1, -0.3]);
        let pol = exo_gains_finite(&dm, &riccati_finite(&dm, t).unwrap(), &w).unwrap();
        let own = OwnNoise {
            x0: GaussianLaw { mean: Vector::from_vec(vec![1.0, 0.5]), cov: Mat::identity(2, 2) * 0.3 },
            w: GaussianLaw { mean: w, cov: Mat::identity(2, 2) * 0.2 },
        };
        let env = random_env(seed + 1000, 2, t);
        let cost = |p: &FiniteExoPolicy| eval_exo_cost(p, &dm, &own, &env).unwrap();
        let base = cost(&pol);
        let k = params_mut(&mut pol.clone()).len();
        let step = 1e-5;
        for i in 0..k {
            let (mut up, mut dn) = (pol.clone(), pol.clone());
            *params_mut(&mut up)[i] += step;
            *params_mut(&mut dn)[i] -= step;
            let fd = (cost(&up) - cost(&dn)) / (2.0 * step);
            worst_grad = worst_grad.max(fd.abs() / (1.0 + base.abs()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let mut p = pol.clone();
            for v in params_mut(&mut p) {
                *v += rng.random_range(-1e-2..1e-2);
            }
            worst_gain = worst_gain.max(base - cost(&p));
        }
    }
    report(
        7,
        "exo policy optimal against its belief",
        worst_grad <= GRADIENT_REL_TOL && worst_gain <= IMPROVEMENT_TOL,
        format!("max rel gradient {worst_grad:.2e} (tol {GRADIENT_REL_TOL:.0e}), max improvement {worst_gain:.2e} (tol {IMPROVEMENT_TOL:.0e})"),
    );
}

#[test]
fn criterion_08_riccati() {
    let (mut worst_gap, mut worst_res) = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut dm = scenarios::random_stabilizable_group(seed + 50, 2, 2, 1, Horizon::Finite(1));
        dm.beta = 0.9;
        let ric = riccati_algebraic(&dm, &RiccatiOptions::default()).unwrap();
        let ladder = riccati_finite(&dm, 200).unwrap();
        worst_gap = worst_gap.max((&ladder.m[0] - &ric.m).amax());
        // Independent residual of the algebraic equation.
        let st = dm.stage(0);
        let (a, b, m, beta) = (&st.a, &st.b, &ric.m, dm.beta);
        let s = &st.r + b.transpose() * m * b * beta;
        let gain = s.clone().try_inverse().unwrap() * b.transpose() * m * a * beta;
        let rhs = &st.q + a.transpose() * m * a * beta - a.transpose() * m * b * &gain * beta;
        worst_res = worst_res.max((rhs - m).amax() / m.amax().max(1.0));
    }
    report(
        8,
        "finite Riccati converges to the algebraic solution",
        worst_gap <= RICCATI_TOL && worst_res <= ARE_TOL,
        format!("max |M0 - M| {worst_gap:.2e} (tol {RICCATI_TOL:.0e}), ARE residual {worst_res:.2e} (tol {ARE_TOL:.0e})"),
    );
}

#[test]
fn criterion_09_stationary() {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, spec) in [("scalar", scenarios::scalar_stationary(0.2)), ("two-DM", scenarios::two_dm_stationary(0.1))] {
        let st = build_sebeu_infinite_stationary(&spec, &FixedPointOptions::default()).unwrap();
        let residual = [st.sigma_residual, st.theta_residual, st.mean_residual, st.fixed_point.residual].into_iter().fold(0.0, f64::max);
        let rho = linalg::spectral_radius(&st.a_cl);
        let ctrls: Vec<_> = st.gains.iter().map(|g| st.belief.controller(g)).collect();
        let start = StartLaw::of_belief(&st.belief);
        let drift = stationarity_drift(&propagate_moments(&spec, &ctrls, &start, 50));
        let stages = 11;
        let exact = propagate_moments(&spec, &ctrls, &start, stages);
        let n_paths = 10_000;
        let batch = simulate_trajectories(&spec, &ctrls, &start, n_paths, stages, 77).unwrap();
        let mut worst_z: f64 = 0.0;
        for t in 0..stages {
            for k in 0..spec.env_dim {
                let xs: Vec<f64> = batch.paths.iter().map(|p| p.y[t][k]).collect();
                let mean = xs.iter().sum::<f64>() / n_paths as f64;
                let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64).sqrt();
                worst_z = worst_z.max((mean - exact.y[t].mean()[k]).abs() / (sd / (n_paths as f64).sqrt()));
            }
        }
        ok &= residual <= STATIONARY_RESIDUAL_TOL && rho < 1.0 && drift <= DRIFT_TOL && worst_z <= MC_SIGMAS;
        notes.push(format!("{name}: residual {residual:.1e}, rho {rho:.4}, drift {drift:.1e}, MC z {worst_z:.2}"));
    }
    report(
        9,
        "stationary SEBEU",
        ok,
        format!("{}; tols residual {STATIONARY_RESIDUAL_TOL:.0e}, rho < 1, drift {DRIFT_TOL:.0e}, z {MC_SIGMAS}", notes.join("; ")),
    );
}

#[test]
fn criterion_10_mean_field_is_nash() {
    let mut spec = scenarios::scalar_stationary(0.0);
    spec.groups[0].count = 1000;
    spec.n_dm = 1000;
    spec.env[0].e1[0][(0, 0)] = 0.3;
    spec.groups[0].stages[0].k[(0, 0)] = 0.2;
    let mf = solve_mean_field(&spec).unwrap();
    let chk = epsnash::mean_field_nash_check(&spec, &mf, 100, 1e-2, 10).unwrap();
    report(
        10,
        "mean-field SEBEU is Nash",
        chk.max_improvement <= IMPROVEMENT_TOL && chk.unstable < chk.perturbations,
        format!("max improvement {:.2e} over {} perturbations (tol {IMPROVEMENT_TOL:.0e})", chk.max_improvement, chk.perturbations - chk.unstable),
    );
}

#[test]
fn criterion_11_reproducible_cli() {
    let scen = tempfile::tempdir().unwrap();
    let spec_path = scen.path().join("two_dm.json");
    let doc = sebeu::model::spec_to_string(&sebeu::model::Spec::Lq(scenarios::two_dm_stationary(0.1)));
    std::fs::write(&spec_path, doc).unwrap();
    let eg_path = scen.path().join("example2.json");
    let doc = sebeu::model::spec_to_string(&sebeu::model::Spec::Lq(scenarios::example2(&Example2Params::unit(), 3)));
    std::fs::write(&eg_path, doc).unwrap();
    let runs: Vec<(tempfile::TempDir, tempfile::TempDir)> = (0..2)
        .map(|_| {
            let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            let args = |cmd: &str, spec: &std::path::Path, out: &std::path::Path| {
                vec!["sebeu".to_string(), cmd.into(), "--spec".into(), spec.display().to_string(), "--out".into(), out.display().to_string(), "--seed".into(), "42".into(), "--paths".into(), "200".into()]
            };
            assert_eq!(sebeu::cli::run(args("simulate", &spec_path, a.path())), 0);
            assert_eq!(sebeu::cli::run(args("eps-gap", &eg_path, b.path())), 0);
            (a, b)
        })
        .collect();
    let mut differing = Vec::new();
    let mut compared = 0;
    for (file, dir0, dir1) in [
        ("trajectories.csv", runs[0].0.path(), runs[1].0.path()),
        ("trajectories.bin", runs[0].0.path(), runs[1].0.path()),
        ("gaps.csv", runs[0].1.path(), runs[1].1.path()),
    ] {
        compared += 1;
        if std::fs::read(dir0.join(file)).unwrap() != std::fs::read(dir1.join(file)).unwrap() {
            differing.push(file);
        }
    }
    report(11, "same seed gives identical artifacts", differing.is_empty(), format!("{compared} artifacts compared byte for byte; differing {differing:?}"));
}
