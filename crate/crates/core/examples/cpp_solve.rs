//! Enumerate pairings, solve the set-partitioning master with
//! branch-and-bound, then repeat with rolling windows and a warm start.
//!
//! ```bash
//! cargo run --release --example cpp_solve
//! ```

use structckn::cpp::{
    add_base_constraints, branch_and_bound, enumerate_pairings, solve_windows, BaseTargets, BnbConfig, CostConfig,
    EnumerationLimits, MasterProblem, Penalties, SolveConfig, WarmMode, WindowConfig,
};
use structckn::crew::{generate_instance, GeneratorParams, PairingPlan, RuleSet};

fn main() -> structckn::Result<()> {
    let params = GeneratorParams { n_cities: 8, n_bases: 2, n_flights: 150, horizon_days: 10, aircraft_types: 2, seed: 5 };
    let inst = generate_instance(&params, &RuleSet::default())?;
    let cost = CostConfig::default();
    let pool = enumerate_pairings(&inst, &EnumerationLimits::default(), &cost)?;
    println!("{} flights, {} enumerated pairings", inst.flights.len(), pool.len());

    let master = MasterProblem::new(&inst, pool.clone(), Penalties::default())?;
    let master = add_base_constraints(master, BaseTargets { shares: vec![0.5, 0.5], penalty: 0.1 })?;
    let sol = branch_and_bound(&master, &BnbConfig::default())?;
    let s = &sol.stats;
    println!(
        "single solve: root LP {:.1}, {} fractional at root, {} nodes, best {:.1} (pairings {:.1} + global {:.1})",
        s.lp_root,
        s.n_fractional_root,
        s.n_nodes,
        s.best_int,
        sol.evaluation.pairing_cost,
        sol.evaluation.global_cost
    );

    let win = WindowConfig::default();
    let cold = solve_windows(&inst, &pool, None, &SolveConfig::default(), &win)?;
    let plan = PairingPlan { pairings: inst.ground_truth.clone(), uncovered: Vec::new() };
    let warm_cfg = SolveConfig { warm_mode: Some(WarmMode::Both), ..SolveConfig::default() };
    let warm = solve_windows(&inst, &pool, Some(&plan), &warm_cfg, &win)?;
    for (name, m) in [("cold", &cold.metrics), ("warm", &warm.metrics)] {
        println!(
            "{name}: {} windows, total {:.1}, {} deadheads, {} undercovered, {:.2} s",
            m.n_windows, m.total_cost, m.n_deadheads, m.n_undercovered, m.wall_seconds
        );
    }
    Ok(())
}
