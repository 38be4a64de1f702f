//! How much one DM gains by abandoning the SEBEU, as the population grows,
//! next to the closed-form best response of the two-stage scalar game.

use sebeu::epsnash::{example2_nash_response, sweep_population, SearchConfig};
use sebeu::scenarios::{self, Example2Params};

fn main() -> sebeu::error::Result<()> {
    let params = Example2Params::unit();
    let spec = scenarios::example2(&params, 1);
    let grid = [1, 4, 16, 64, 256];
    let rows = sweep_population(&spec, &grid, &SearchConfig::default())?;
    println!("{:>5} {:>14} {:>14} {:>12} {:>12}", "N", "gap", "N*gap", "k1~", "n1~");
    for row in rows {
        let cf = example2_nash_response(&params, row.n_dm);
        println!("{:>5} {:>14.6e} {:>14.6e} {:>12.4e} {:>12.4e}", row.n_dm, row.gap, row.gap * row.n_dm as f64, cf.k1_tilde, cf.n1_tilde);
    }
    Ok(())
}
