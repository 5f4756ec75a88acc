use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{build_connection_candidates, check_pairing_feasibility, Flight, Instance, Pairing, RuleSet, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::rng::{child_rng, child_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub n_cities: usize,
    pub n_bases: usize,
    pub n_flights: usize,
    pub horizon_days: i64,
    pub aircraft_types: usize,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self { n_cities: 20, n_bases: 3, n_flights: 200, horizon_days: 7, aircraft_types: 3, seed: 0 }
    }
}

const PAIRING_ATTEMPTS: usize = 200;
const INSTANCE_ATTEMPTS: usize = 20;

struct Draft {
    base: usize,
    legs: Vec<Flight>,
    breaks: Vec<usize>,
}

fn city_code(i: usize) -> String {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("X{a}{b}")
}

fn block_time(coords: &[(f64, f64)], a: usize, b: usize) -> i64 {
    let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
    45 + (dx.hypot(dy) * 200.0).round() as i64
}

/// Split `n` flights into pairing lengths between 2 and `max_len`.
fn pairing_lengths(n: usize, max_len: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = n;
    while left > 0 {
        let len = if left <= max_len {
            left
        } else {
            rng.gen_range(2..=max_len.min(left - 2).clamp(2, 6))
        };
        out.push(len);
        left -= len;
    }
    out
}

/// Random composition of `len` flights into duties obeying the per-duty cap.
fn duty_sizes(len: usize, rules: &RuleSet, rng: &mut Rng) -> Option<Vec<usize>> {
    let min_duties = len.div_ceil(rules.max_flights_per_duty);
    let max_duties = len.min(rules.max_duties_per_pairing).min(rules.max_days_per_pairing as usize);
    if min_duties > max_duties {
        return None;
    }
    let k = rng.gen_range(min_duties..=max_duties);
    let mut sizes = vec![1; k];
    for _ in k..len {
        let open: Vec<usize> = (0..k).filter(|&d| sizes[d] < rules.max_flights_per_duty).collect();
        sizes[*open.choose(rng)?] += 1;
    }
    Some(sizes)
}

fn draft_pairing(
    len: usize,
    params: &GeneratorParams,
    rules: &RuleSet,
    bases: &[usize],
    coords: &[(f64, f64)],
    rng: &mut Rng,
) -> Option<Draft> {
    let base = *bases.choose(rng)?;
    let aircraft = rng.gen_range(0..params.aircraft_types);
    let sizes = duty_sizes(len, rules, rng)?;
    let mut route = vec![base];
    for k in 1..len {
        let prev = route[k - 1];
        let last_hop = k == len - 1;
        let options: Vec<usize> = (0..params.n_cities).filter(|&c| c != prev && !(last_hop && c == base)).collect();
        route.push(*options.choose(rng)?);
    }
    route.push(base);

    let day = rng.gen_range(0..params.horizon_days);
    let mut t = day * MINUTES_PER_DAY + rng.gen_range(300..=720);
    let mut legs = Vec::with_capacity(len);
    let mut breaks = Vec::new();
    let mut k = 0;
    for (d, &size) in sizes.iter().enumerate() {
        if d > 0 {
            breaks.push(k);
            t += rng.gen_range(rules.min_rest..=rules.min_rest + 360);
        }
        for j in 0..size {
            if j > 0 {
                t += rng.gen_range(rules.min_connection..=rules.min_connection + 90);
            }
            let dur = block_time(coords, route[k], route[k + 1]);
            legs.push(Flight { id: 0, origin: route[k], destination: route[k + 1], aircraft, departure: t, arrival: t + dur });
            t += dur;
            k += 1;
        }
    }
    if t > params.horizon_days * MINUTES_PER_DAY {
        return None;
    }
    Some(Draft { base, legs, breaks })
}

fn try_generate(params: &GeneratorParams, rules: &RuleSet, rng: &mut Rng) -> Result<Instance> {
    let coords: Vec<(f64, f64)> = (0..params.n_cities).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let mut cities: Vec<usize> = (0..params.n_cities).collect();
    cities.shuffle(rng);
    let mut bases = cities[..params.n_bases].to_vec();
    bases.sort_unstable();
    let probe = Instance {
        cities: (0..params.n_cities).map(city_code).collect(),
        bases: bases.clone(),
        rules: rules.clone(),
        horizon_days: params.horizon_days,
        flights: Vec::new(),
        ground_truth: Vec::new(),
    };

    let mut drafts = Vec::new();
    for len in pairing_lengths(params.n_flights, rules.max_landings_per_pairing, rng) {
        let mut accepted = None;
        for _ in 0..PAIRING_ATTEMPTS {
            let Some(d) = draft_pairing(len, params, rules, &bases, &coords, rng) else { continue };
            let mut local = probe.clone();
            local.flights = d.legs.iter().enumerate().map(|(i, f)| Flight { id: i, ..f.clone() }).collect();
            let p = Pairing { base: d.base, flights: (0..len).collect(), duty_breaks: d.breaks.clone() };
            if check_pairing_feasibility(&p, &local)?.feasible && local.canonical_breaks(&p.flights) == d.breaks {
                accepted = Some(d);
                break;
            }
        }
        drafts.push(accepted.ok_or_else(|| Error::Generation(format!("no rule-abiding pairing of {len} flights found")))?);
    }

    // ids follow departure order
    let mut keyed: Vec<(usize, usize, Flight)> = drafts
        .iter()
        .enumerate()
        .flat_map(|(p, d)| d.legs.iter().enumerate().map(move |(k, f)| (p, k, f.clone())))
        .collect();
    keyed.sort_by(|a, b| {
        (a.2.departure, a.2.origin, a.2.destination, a.2.aircraft, a.0).cmp(&(b.2.departure, b.2.origin, b.2.destination, b.2.aircraft, b.0))
    });
    let mut ids: Vec<Vec<usize>> = drafts.iter().map(|d| vec![0; d.legs.len()]).collect();
    let flights: Vec<Flight> = keyed
        .into_iter()
        .enumerate()
        .map(|(id, (p, k, f))| {
            ids[p][k] = id;
            Flight { id, ..f }
        })
        .collect();
    let mut ground_truth: Vec<Pairing> = drafts
        .iter()
        .zip(ids)
        .map(|(d, flights)| Pairing { base: d.base, flights, duty_breaks: d.breaks.clone() })
        .collect();
    ground_truth.sort_by_key(|p| p.flights[0]);
    let inst = Instance { flights, ground_truth, ..probe };

    // every true successor must be reachable through the candidate lists
    for p in &inst.ground_truth {
        for w in p.flights.windows(2) {
            if !build_connection_candidates(&inst.flights[w[0]], &inst).contains(&w[1]) {
                return Err(Error::Generation(format!("true successor of flight {} is not a candidate", w[0])));
            }
        }
    }
    Ok(inst)
}

/// Crew-first synthetic instance: draw rule-abiding base round trips (each on
/// one aircraft type), then number the flights by departure time. Every
/// flight is covered exactly once by the ground truth.
pub fn generate_instance(params: &GeneratorParams, rules: &RuleSet) -> Result<Instance> {
    rules.validate()?;
    if params.n_cities < 2 || params.n_bases == 0 || params.n_bases > params.n_cities {
        return Err(Error::Config("need at least two cities and 1 <= n_bases <= n_cities".into()));
    }
    if params.n_flights < 2 {
        return Err(Error::Generation("a base round trip needs at least two flights".into()));
    }
    if params.aircraft_types == 0 || params.horizon_days <= 0 {
        return Err(Error::Config("aircraft_types and horizon_days must be positive".into()));
    }
    let mut last = None;
    for attempt in 0..INSTANCE_ATTEMPTS {
        let mut rng = child_rng(child_seed(params.seed, "generate"), &attempt.to_string());
        match try_generate(params, rules, &mut rng) {
            Ok(inst) => return Ok(inst),
            Err(e @ Error::Generation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Generation("no instance generated".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crew::check_pairing_feasibility;

    #[test]
    fn two_flights_make_one_round_trip() {
        let params = GeneratorParams { n_cities: 2, n_bases: 1, n_flights: 2, ..Default::default() };
        let inst = generate_instance(&params, &RuleSet::default()).unwrap();
        assert_eq!(inst.ground_truth.len(), 1);
        assert_eq!(inst.ground_truth[0].flights, vec![0, 1]);
        assert_eq!(inst.flights[0].destination, inst.flights[1].origin);
    }

    #[test]
    fn ground_truth_is_a_feasible_exact_cover() {
        let params = GeneratorParams { n_flights: 200, seed: 4, ..Default::default() };
        let inst = generate_instance(&params, &RuleSet::default()).unwrap();
        inst.validate().unwrap();
        assert_eq!(inst.flights.len(), 200);
        let mut seen = vec![0; 200];
        for p in &inst.ground_truth {
            assert!(check_pairing_feasibility(p, &inst).unwrap().feasible, "{p:?}");
            for &f in &p.flights {
                seen[f] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(inst.flights.windows(2).all(|w| w[0].departure <= w[1].departure));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = GeneratorParams { n_flights: 60, seed: 11, ..Default::default() };
        let a = generate_instance(&p, &RuleSet::default()).unwrap().to_json().unwrap();
        let b = generate_instance(&p, &RuleSet::default()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&GeneratorParams { seed: 12, ..p }, &RuleSet::default()).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_flight_cannot_be_covered() {
        let p = GeneratorParams { n_flights: 1, ..Default::default() };
        assert!(matches!(generate_instance(&p, &RuleSet::default()), Err(Error::Generation(_))));
    }
}
