//! Writes the built-in scenarios as JSON documents usable with the CLI.
//!
//! `cargo run --example export_scenarios -- scenarios`

use std::path::PathBuf;

use sebeu::model::{spec_to_string, Spec};
use sebeu::scenarios::{self, Example2Params};

fn main() -> sebeu::error::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    std::fs::create_dir_all(&dir)?;
    let mut mean_field = scenarios::scalar_stationary(0.0);
    mean_field.groups[0].count = 1000;
    mean_field.n_dm = 1000;
    mean_field.env[0].e1[0][(0, 0)] = 0.3;
    mean_field.groups[0].stages[0].k[(0, 0)] = 0.2;
    let docs = [
        ("example1_n2", Spec::Finite(scenarios::example1(2))),
        ("example1_n6", Spec::Finite(scenarios::example1(6))),
        ("matching_pennies", Spec::Finite(scenarios::matching_pennies())),
        ("example2_n1", Spec::Lq(scenarios::example2(&Example2Params::unit(), 1))),
        ("example2_n16", Spec::Lq(scenarios::example2(&Example2Params::unit(), 16))),
        ("scalar_stationary", Spec::Lq(scenarios::scalar_stationary(0.2))),
        ("two_dm_stationary", Spec::Lq(scenarios::two_dm_stationary(0.1))),
        ("mean_field", Spec::Lq(mean_field)),
    ];
    for (name, spec) in docs {
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, spec_to_string(&spec) + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}
