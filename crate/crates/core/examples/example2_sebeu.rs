//! Finite-horizon SEBEU of the two-stage scalar game for several
//! population sizes, read as feedback on the own state and the observed
//! environment.

use sebeu::scenarios::{self, Example2Params};
use sebeu::sebeu_lq::build_sebeu_finite;

fn main() -> sebeu::error::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>14} {:>14}", "N", "f0", "f1", "k1", "N*k1");
    for n in [1, 2, 4, 16, 256] {
        let spec = scenarios::example2(&Example2Params::unit(), n);
        let prof = build_sebeu_finite(&spec)?;
        let ctrl = &prof.controllers()[0];
        let (ys, _) = ctrl.history_form(1).expect("history form exists for SEBEU controllers");
        let k1 = ys[1][(0, 0)];
        println!("{n:>6} {:>10.6} {:>10.6} {k1:>14.6e} {:>14.6e}", ctrl.stage(0).f[(0, 0)], ctrl.stage(1).f[(0, 0)], n as f64 * k1);
    }
    Ok(())
}
