//! Monte Carlo sample paths with per-path random streams.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::controller::Controller;
use super::engine::rollout;
use super::moments::{Primitives, StartLaw};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::LqGameSpec;

/// One sampled path.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// Stream identifier of the path inside the master seed.
    pub stream: u64,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub u: Vec<Vec<Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub master_seed: u64,
    pub stages: usize,
    pub paths: Vec<SamplePath>,
}

/// Path `i` draws its standard normals from ChaCha8 seeded with the master
/// seed on stream `i`, so the batch is the same for any thread count or
/// evaluation order.
pub fn simulate_trajectories(
    spec: &LqGameSpec,
    controllers: &[Controller],
    start: &StartLaw,
    n_paths: usize,
    stages: usize,
    master_seed: u64,
) -> Result<TrajectoryBatch> {
    if n_paths == 0 {
        return Err(Error::InvalidValue { field: "paths".into(), message: "at least one path is required".into() });
    }
    if controllers.len() != spec.groups.len() {
        return Err(Error::dim("controllers", spec.groups.len(), controllers.len()));
    }
    let prims = Primitives::new(spec, start, stages);
    let dim = prims.layout.dim();
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(stream);
            let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let run = rollout(spec, controllers, &prims.init_sample(&z), stages, |t| prims.noise_sample(t, &z));
            SamplePath { stream, x: run.x, y: run.y, u: run.u }
        })
        .collect();
    Ok(TrajectoryBatch { master_seed, stages, paths })
}

fn join(v: &Vector) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";")
}

impl TrajectoryBatch {
    /// Population aggregate `d_t = sum_g (c_g / N) [x_g; u_g]`, defined when
    /// all groups share state and control dimensions.
    pub fn aggregate(&self, spec: &LqGameSpec, path: usize, t: usize) -> Option<Vector> {
        let (n, m) = (spec.groups[0].n(), spec.groups[0].m());
        if spec.groups.iter().any(|g| g.n() != n || g.m() != m) {
            return None;
        }
        let p = &self.paths[path];
        let mut d = Vector::zeros(n + m);
        for g in 0..spec.groups.len() {
            let w = spec.weight(g);
            let x = p.x[t].rows(spec.group_offset(g), n);
            d.rows_mut(0, n).axpy(w, &x, 1.0);
            d.rows_mut(n, m).axpy(w, &p.u[t][g], 1.0);
        }
        Some(d)
    }

    /// CSV with one row per path, stage and group: `path,t,dm,x,u,y,d`
    /// (vectors are `;`-separated; `x` and `u` are the group's averages).
    pub fn write_csv(&self, spec: &LqGameSpec, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "path,t,dm,x,u,y,d")?;
        for (i, p) in self.paths.iter().enumerate() {
            for t in 0..self.stages {
                let d = self.aggregate(spec, i, t).map(|d| join(&d)).unwrap_or_default();
                let y = join(&p.y[t]);
                for g in 0..spec.groups.len() {
                    let x = p.x[t].rows(spec.group_offset(g), spec.groups[g].n()).into_owned();
                    writeln!(out, "{},{},{},{},{},{},{}", i, t, g, join(&x), join(&p.u[t][g]), y, d)?;
                }
            }
        }
        Ok(())
    }

    /// Columnar little-endian dump: the magic `SEBEUTRJ`, then `u64` path
    /// count, stage count, state, environment and per-group control
    /// dimensions, followed by the `y`, `X` and per-group `u` columns, each
    /// laid out path-major.
    pub fn write_binary(&self, spec: &LqGameSpec, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(b"SEBEUTRJ")?;
        let mut header = vec![self.paths.len() as u64, self.stages as u64, spec.state_dim() as u64, spec.env_dim as u64, spec.groups.len() as u64];
        header.extend(spec.groups.iter().map(|g| g.m() as u64));
        for h in header {
            out.write_all(&h.to_le_bytes())?;
        }
        let mut put = |v: &Vector| -> std::io::Result<()> {
            for x in v.iter() {
                out.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        for p in &self.paths {
            p.y.iter().try_for_each(&mut put)?;
        }
        for p in &self.paths {
            p.x.iter().try_for_each(&mut put)?;
        }
        for g in 0..spec.groups.len() {
            for p in &self.paths {
                p.u.iter().try_for_each(|us| put(&us[g]))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use crate::sebeu_lq::build_sebeu_finite;
    use crate::simulate::moments::propagate_moments;

    #[test]
    fn zero_noise_paths_follow_the_mean() {
        let mut spec = scenarios::random_weakly_coupled(4, &scenarios::RandomSpecConfig::finite(3));
        spec.noise = scenarios::zero_noise(&spec);
        spec.noise.x0_mean.fill(0.7);
        let prof = build_sebeu_finite(&spec).unwrap();
        let ctrls = prof.controllers();
        let batch = simulate_trajectories(&spec, &ctrls, &StartLaw::Spec, 3, 3, 1).unwrap();
        let exact = propagate_moments(&spec, &ctrls, &StartLaw::Spec, 3);
        for p in &batch.paths {
            for t in 0..3 {
                assert!((&p.y[t] - exact.y[t].mean()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_is_independent_of_thread_count() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 3);
        let ctrls = build_sebeu_finite(&spec).unwrap().controllers();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_trajectories(&spec, &ctrls, &StartLaw::Spec, 64, 2, 99).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn example2_mean_is_zero_by_monte_carlo() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 1);
        let ctrls = build_sebeu_finite(&spec).unwrap().controllers();
        let n = 100_000;
        let batch = simulate_trajectories(&spec, &ctrls, &StartLaw::Spec, n, 2, 2024).unwrap();
        let ys: Vec<f64> = batch.paths.iter().map(|p| p.y[0][0]).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sd / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn csv_has_one_row_per_path_stage_and_group() {
        let spec = scenarios::two_dm_stationary(0.1);
        let mut fin = spec.clone();
        fin.horizon = crate::model::Horizon::Finite(3);
        for g in fin.groups.iter_mut() {
            g.q_terminal = Some(g.stages[0].q.clone());
        }
        let ctrls = build_sebeu_finite(&fin).unwrap().controllers();
        let batch = simulate_trajectories(&fin, &ctrls, &StartLaw::Spec, 2, 3, 5).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&fin, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
        let mut bin = Vec::new();
        batch.write_binary(&fin, &mut bin).unwrap();
        let header = 8 + 8 * 7;
        let floats = 2 * 3 + 2 * 4 * 3 + 2 * 2 * 3;
        assert_eq!(bin.len(), header + 8 * floats);
    }
}
