//! Damped best-reply iteration toward a mixed SEBEU of finite games.

use sebeu::finite_eq::{sebeu_fixed_point_iteration, uniform_profile};
use sebeu::scenarios;

fn main() -> sebeu::error::Result<()> {
    for (name, spec) in [("demand response, N = 3", scenarios::example1(3)), ("matching pennies", scenarios::matching_pennies())] {
        let rep = sebeu_fixed_point_iteration(&spec, uniform_profile(&spec), 0.5, 1e-12, 5000)?;
        println!("{name}: converged {} after {} iterations", rep.converged, rep.iterations);
        for (i, p) in rep.profile.iter().enumerate() {
            println!("  DM {i}: {p:.4?} (best-reply residual {:.2e})", rep.residuals[i]);
        }
        println!("  environment law {:.4?}", rep.env_law);
    }
    Ok(())
}
