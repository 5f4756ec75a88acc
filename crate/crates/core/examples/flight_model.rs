//! Train the next-flight Struct-CKN and compare constrained and unconstrained
//! decoding by the share of illegal pairings they produce.
//!
//! ```bash
//! cargo run --release --example flight_model
//! ```

use structckn::cpp::CostConfig;
use structckn::crew::{default_flight_config, predicted_plan, train_flight_model, Decoding, FlightData};
use structckn::inference::Ad3Config;

fn main() -> structckn::Result<()> {
    let data = FlightData { test_seeds: vec![0, 1], ..FlightData::default() };
    let cfg = default_flight_config(&data.generator, &data.rules, 0);
    let (model, rows) = train_flight_model(&data.instances(&data.train_seeds)?, &cfg, None)?;
    if let Some(r) = rows.last() {
        println!("trained in {:.1} s, gap {:.3e}", r.wall_seconds, r.gap);
    }
    for inst in data.instances(&data.test_seeds)? {
        for decoding in [Decoding::Constrained, Decoding::Unconstrained] {
            let (plan, stats) = predicted_plan(&model, &inst, decoding, &Ad3Config::default(), &CostConfig::default())?;
            println!(
                "{decoding:?}: {} pairings, {:.1}% illegal, {} legal pairings kept",
                stats.n_pairings,
                stats.percent_infeasible,
                plan.pairings.len()
            );
        }
    }
    Ok(())
}
