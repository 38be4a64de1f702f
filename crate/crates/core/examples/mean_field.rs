//! Mean-field SEBEU of a large population of identical DMs and a check
//! that no single DM gains by perturbing its policy.

use sebeu::epsnash::mean_field_nash_check;
use sebeu::scenarios;
use sebeu::sebeu_lq::solve_mean_field;

fn main() -> sebeu::error::Result<()> {
    let mut spec = scenarios::scalar_stationary(0.0);
    spec.groups[0].count = 1000;
    spec.n_dm = 1000;
    spec.env[0].e1[0][(0, 0)] = 0.3;
    spec.groups[0].stages[0].k[(0, 0)] = 0.2;
    let mf = solve_mean_field(&spec)?;
    println!("F = {:.6}, G_sum = {:.6}, H = {:.6}", mf.policy.f[(0, 0)], mf.policy.g_sum[(0, 0)], mf.policy.h[0]);
    println!("stationary environment mean {:.6}, state mean {:.6}", mf.y_hat[0], mf.x_hat[0]);
    if let Some(note) = &mf.init_mismatch {
        println!("note: {note}");
    }
    let chk = mean_field_nash_check(&spec, &mf, 200, 1e-2, 1)?;
    println!("equilibrium cost {:.8}, best perturbed {:.8}, improvement {:.2e}", chk.equilibrium_cost, chk.best_perturbed_cost, chk.max_improvement);
    Ok(())
}
