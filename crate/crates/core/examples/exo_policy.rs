//! Exo-optimal control of one DM that treats the environment as exogenous:
//! Riccati ladder, forecast gains and the exact expected cost.

use nalgebra::{DMatrix, DVector};
use sebeu::lqr_exo::{eval_exo_cost, exo_gains_finite, riccati_finite, ExoEnvLaw, OwnNoise};
use sebeu::scenarios::{self, Example2Params};
use sebeu::simulate::gaussian::GaussianLaw;

fn main() -> sebeu::error::Result<()> {
    let dm = scenarios::example2(&Example2Params::unit(), 1).groups[0].clone();
    let ladder = riccati_finite(&dm, 2)?;
    let policy = exo_gains_finite(&dm, &ladder, &DVector::zeros(1))?;
    println!("M_0 = {:.6}, M_1 = {:.6}", ladder.m[0][(0, 0)], ladder.m[1][(0, 0)]);
    println!("F_0 = {:.6}, F_1 = {:.6}", policy.f[0][(0, 0)], policy.f[1][(0, 0)]);
    println!("G_00 = {:.6}, G_01 = {:.6}, G_11 = {:.6}", policy.g(0, 0)[(0, 0)], policy.g(0, 1)[(0, 0)], policy.g(1, 1)[(0, 0)]);

    // A belief in which (y_-1, y_0, y_1) are independent standard normals.
    let env = ExoEnvLaw::new(1, GaussianLaw { mean: DVector::zeros(3), cov: DMatrix::identity(3, 3) })?;
    let own = OwnNoise {
        x0: GaussianLaw { mean: DVector::zeros(1), cov: DMatrix::identity(1, 1) },
        w: GaussianLaw { mean: DVector::zeros(1), cov: DMatrix::identity(1, 1) },
    };
    println!("expected cost under that belief: {:.6}", eval_exo_cost(&policy, &dm, &own, &env)?);
    Ok(())
}
