//! Generate a flight schedule, inspect connection candidates, and rebuild the
//! ground-truth pairings from perfect predictions.
//!
//! ```bash
//! cargo run --example crew_instance
//! ```

use structckn::cpp::CostConfig;
use structckn::crew::{
    all_candidates, break_illegal, check_pairing_feasibility, generate_instance, greedy_build_pairings, BidPeriod,
    GeneratorParams, Predictions, RuleSet,
};

fn main() -> structckn::Result<()> {
    let params = GeneratorParams { n_cities: 10, n_bases: 2, n_flights: 120, horizon_days: 5, aircraft_types: 2, seed: 3 };
    let inst = generate_instance(&params, &RuleSet::default())?;
    println!("{} flights, {} true pairings, bases {:?}", inst.flights.len(), inst.ground_truth.len(), inst.bases);

    let cands = all_candidates(&inst);
    let mean = cands.iter().map(Vec::len).sum::<usize>() as f64 / cands.len() as f64;
    println!("mean candidates per flight {mean:.2}");

    let p = &inst.ground_truth[0];
    let v = check_pairing_feasibility(p, &inst)?;
    println!("first pairing {:?} breaks {:?} feasible {}", p.flights, p.duty_breaks, v.feasible);

    let plan = greedy_build_pairings(&Predictions::oracle(&inst), &inst);
    let (_, stats) = break_illegal(&plan, &inst, &BidPeriod::default(), &CostConfig::default())?;
    println!("oracle plan: {} pairings, {:.1}% illegal, cost {:.1}", stats.n_pairings, stats.percent_infeasible, stats.cost);
    Ok(())
}
