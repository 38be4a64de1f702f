//! Infinite-horizon stationary SEBEU of two coupled DMs: gains, filter
//! covariance, closed-loop stability and the stationary moments.

use sebeu::linalg;
use sebeu::scenarios;
use sebeu::sebeu_lq::{build_sebeu_infinite_stationary, FixedPointOptions};

fn main() -> sebeu::error::Result<()> {
    let spec = scenarios::two_dm_stationary(0.1);
    let st = build_sebeu_infinite_stationary(&spec, &FixedPointOptions::default())?;
    for (g, gains) in st.gains.iter().enumerate() {
        println!("group {g}: F = {:.6?}, G = {:.6?}, H = {:.6?}", gains.f[0].as_slice(), gains.g[0].as_slice(), gains.h[0].as_slice());
    }
    println!("fixed point: {} iterations, residual {:.2e}", st.fixed_point.iterations, st.fixed_point.residual);
    println!("filter error covariance (column-major): {:.6?}", st.sigma.as_slice());
    println!("stationary state covariance (column-major): {:.6?}", st.theta.as_slice());
    println!("closed-loop spectral radius: {:.6}", linalg::spectral_radius(&st.a_cl));
    Ok(())
}
