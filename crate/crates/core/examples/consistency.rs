//! The environment law SEBEU policies generate equals the law they were
//! optimized against; a perturbed policy breaks the match.

use sebeu::scenarios::{self, RandomSpecConfig};
use sebeu::sebeu_lq::build_sebeu_finite;
use sebeu::simulate::moments::consistency_check;

fn main() -> sebeu::error::Result<()> {
    for seed in 0..5 {
        let spec = scenarios::random_weakly_coupled(seed, &RandomSpecConfig::finite(3));
        let prof = build_sebeu_finite(&spec)?;
        let ctrls = prof.controllers();
        let rep = consistency_check(&spec, &prof.belief, &ctrls, 3, 1e-8);
        let mut bent = ctrls.clone();
        bent[0].stages[0].f.iter_mut().for_each(|v| *v += 0.1);
        let off = consistency_check(&spec, &prof.belief, &bent, 3, 1e-8);
        println!(
            "seed {seed}: SEBEU gaps mean {:.1e} cov {:.1e} ({}); perturbed mean {:.1e} cov {:.1e}",
            rep.mean_gap,
            rep.cov_gap,
            if rep.passed { "consistent" } else { "inconsistent" },
            off.mean_gap,
            off.cov_gap
        );
    }
    Ok(())
}
