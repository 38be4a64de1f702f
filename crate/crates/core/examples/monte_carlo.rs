//! Reproducible Monte Carlo paths under a stationary SEBEU, compared with
//! the exact propagated moments.

use sebeu::scenarios;
use sebeu::sebeu_lq::build_sebeu;
use sebeu::simulate::moments::{propagate_moments, StartLaw};
use sebeu::simulate::trajectories::simulate_trajectories;

fn main() -> sebeu::error::Result<()> {
    let spec = scenarios::scalar_stationary(0.2);
    let prof = build_sebeu(&spec)?;
    let ctrls = prof.controllers();
    let start = StartLaw::of_belief(prof.belief());
    let stages = 6;
    let n = 20_000;
    let batch = simulate_trajectories(&spec, &ctrls, &start, n, stages, 7)?;
    let exact = propagate_moments(&spec, &ctrls, &start, stages);
    println!("{:>3} {:>12} {:>12} {:>10}", "t", "MC mean y", "exact", "z-score");
    for t in 0..stages {
        let ys: Vec<f64> = batch.paths.iter().map(|p| p.y[t][0]).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = exact.y[t].mean()[0];
        println!("{t:>3} {mean:>12.6} {want:>12.6} {:>10.3}", (mean - want) / (var / n as f64).sqrt());
    }
    Ok(())
}
