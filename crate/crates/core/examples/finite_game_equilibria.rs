//! Pure SEBEU, Nash and Kalai profiles of the demand-response game, with
//! the exact deviation gain at each SEBEU.

use sebeu::epsnash::eps_gap_pure;
use sebeu::finite_eq::{enumerate_pure_kalai, enumerate_pure_nash, enumerate_pure_sebeu, ENUMERATION_BUDGET};
use sebeu::scenarios;

fn main() -> sebeu::error::Result<()> {
    for n in 1..=4 {
        let spec = scenarios::example1(n);
        let sebeu = enumerate_pure_sebeu(&spec, ENUMERATION_BUDGET)?;
        let nash = enumerate_pure_nash(&spec, ENUMERATION_BUDGET)?;
        let kalai = enumerate_pure_kalai(&spec, ENUMERATION_BUDGET)?;
        println!("N = {n}: {} SEBEU, {} Nash, {} Kalai", sebeu.len(), nash.len(), kalai.len());
        for u in &sebeu {
            let gaps = eps_gap_pure(&spec, u)?;
            let worst = gaps.gap.iter().max().expect("at least one DM");
            println!("  SEBEU {u:?}: largest deviation gain {worst}");
        }
    }
    Ok(())
}
