//! Runs a consortium simulation and checks it.
//!
//! `cargo run --example simulate -- configs/sim-bounded.toml`

use dhp::netsim::{check_theta_liveness, DelayModel, SimConfig, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => SimConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => SimConfig::new(11, 3, 2, 50).with_delay(DelayModel::UniformBounded { max_rounds: 2 }),
    };
    let theta = config.theta;
    let run = Simulation::new(config)?.run()?;
    print!("{}", run.report.summary());
    match check_theta_liveness(&run.report, theta) {
        Ok(()) => println!("every passport reached every node within {theta} rounds"),
        Err(late) => println!("{} (passport, node) pairs exceeded {theta} rounds", late.len()),
    }
    println!("replicas agree on every token: {}", run.check_consistency());
    Ok(())
}
