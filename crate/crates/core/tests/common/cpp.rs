use structckn::cpp::{pairing_cost, CostConfig};
use structckn::crew::{check_pairing_feasibility, generate_instance, GeneratorParams, Instance, Pairing, RuleSet};

pub fn small_instance(seed: u64) -> Instance {
    let params = GeneratorParams { n_cities: 4, n_bases: 2, n_flights: 12, horizon_days: 3, aircraft_types: 1, seed };
    generate_instance(&params, &RuleSet::default()).unwrap()
}

/// Every chronological flight subset whose canonical pairing passes the checker.
pub fn brute_force_pairings(inst: &Instance) -> Vec<Pairing> {
    let n = inst.flights.len();
    assert!(n <= 16);
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let flights: Vec<usize> = (0..n).filter(|&f| mask >> f & 1 == 1).collect();
        if flights.windows(2).any(|w| inst.flights[w[0]].departure >= inst.flights[w[1]].departure) {
            continue;
        }
        let p = inst.canonical_pairing(flights);
        if check_pairing_feasibility(&p, inst).unwrap().feasible {
            out.push(p);
        }
    }
    out
}

/// Minimum over exact partitions (flights may also be left uncovered at
/// `undercover` each), by DP over covered-flight bitmasks.
pub fn exhaustive_partition_cost(inst: &Instance, undercover: f64) -> f64 {
    let n = inst.flights.len();
    let cfg = CostConfig::default();
    let cols: Vec<(u32, f64)> = brute_force_pairings(inst)
        .iter()
        .map(|p| (p.flights.iter().fold(0u32, |m, &f| m | 1 << f), pairing_cost(p, inst, &cfg).unwrap()))
        .collect();
    min_cover_cost(n, &cols, undercover)
}

/// DP over covered-flight bitmasks: cheapest exact cover by disjoint columns,
/// with any flight left uncovered at `undercover`.
pub fn min_cover_cost(n: usize, cols: &[(u32, f64)], undercover: f64) -> f64 {
    let full = (1u32 << n) - 1;
    let mut best = vec![f64::INFINITY; 1 << n];
    best[full as usize] = 0.0;
    for mask in (0..full).rev() {
        let i = (!mask).trailing_zeros();
        let mut v = undercover + best[(mask | 1 << i) as usize];
        for &(m, c) in cols {
            if m & (1 << i) != 0 && m & mask == 0 {
                v = v.min(c + best[(mask | m) as usize]);
            }
        }
        best[mask as usize] = v;
    }
    best[0]
}
