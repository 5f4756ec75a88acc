//! Crew-pairing domain: flights, rules, pairings, synthetic instances, the
//! flight-connection prediction task, and greedy pairing construction.

mod candidates;
mod generate;
mod greedy;
mod pipeline;
pub mod schema;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use candidates::{
    all_candidates, build_connection_candidates, build_flight_graph_crf, categorical_columns, crew_embedding_fields,
    decode_successors, encode_example, flight_example, flight_template, gt_labels, own_features, successor_map,
    OWN_FEATURES,
};
pub use generate::{generate_instance, GeneratorParams};
pub use pipeline::{default_flight_config, flight_examples, predicted_plan, train_flight_model, FlightData};
pub use greedy::{break_illegal, greedy_build_pairings, plan_from_model, BidPeriod, BreakStats, Decoding, PairingPlan, Predictions};

pub const MINUTES_PER_DAY: i64 = 1440;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flight {
    pub id: usize,
    pub origin: usize,
    pub destination: usize,
    pub aircraft: usize,
    #[serde(rename = "dep")]
    pub departure: i64,
    #[serde(rename = "arr")]
    pub arrival: i64,
}

impl Flight {
    pub fn duration(&self) -> i64 {
        self.arrival - self.departure
    }
}

/// Which time condition the candidate masks apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionMask {
    /// Departure at least `min_connection` after the arrival.
    #[default]
    MinConnection,
    /// Departure strictly after the arrival.
    OrderingOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSet {
    pub min_connection: i64,
    pub min_rest: i64,
    pub max_flights_per_duty: usize,
    pub max_duty_span: i64,
    pub max_landings_per_pairing: usize,
    pub max_flying_per_pairing: i64,
    pub max_days_per_pairing: i64,
    pub max_duties_per_pairing: usize,
    pub candidate_window: i64,
    pub max_candidates: usize,
    pub layover_threshold: i64,
    pub connection_mask: ConnectionMask,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            min_connection: 30,
            min_rest: 540,
            max_flights_per_duty: 6,
            max_duty_span: 780,
            max_landings_per_pairing: 8,
            max_flying_per_pairing: 1800,
            max_days_per_pairing: 4,
            max_duties_per_pairing: 4,
            candidate_window: 2880,
            max_candidates: 20,
            layover_threshold: 360,
            connection_mask: ConnectionMask::MinConnection,
        }
    }
}

impl RuleSet {
    pub fn validate(&self) -> Result<()> {
        let ints = [
            self.min_connection,
            self.min_rest,
            self.max_duty_span,
            self.max_flying_per_pairing,
            self.max_days_per_pairing,
            self.candidate_window,
            self.layover_threshold,
        ];
        let counts = [self.max_flights_per_duty, self.max_landings_per_pairing, self.max_duties_per_pairing, self.max_candidates];
        if ints.iter().any(|&v| v <= 0) || counts.contains(&0) {
            return Err(Error::Config("all rule limits must be positive".into()));
        }
        if self.min_rest <= self.min_connection {
            return Err(Error::Config("min_rest must exceed min_connection".into()));
        }
        Ok(())
    }
}

/// A rule a pairing can break.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MinConnection,
    MinRest,
    MaxFlightsPerDuty,
    MaxDutySpan,
    MaxLandings,
    MaxFlying,
    MaxDays,
    MaxDuties,
    Connectivity,
    BaseStart,
    BaseEnd,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// Flights in order; `duty_breaks[k] = j` means a rest precedes `flights[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pairing {
    pub base: usize,
    pub flights: Vec<usize>,
    #[serde(default)]
    pub duty_breaks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub feasible: bool,
    pub violated: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub cities: Vec<String>,
    pub bases: Vec<usize>,
    pub rules: RuleSet,
    pub horizon_days: i64,
    pub flights: Vec<Flight>,
    #[serde(default)]
    pub ground_truth: Vec<Pairing>,
}

fn day_of(t: i64) -> i64 {
    t.div_euclid(MINUTES_PER_DAY)
}

impl Pairing {
    /// Flight index ranges of each duty.
    pub fn duties(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.duty_breaks.len() + 1);
        let mut start = 0;
        for &b in &self.duty_breaks {
            out.push(start..b);
            start = b;
        }
        out.push(start..self.flights.len());
        out
    }

    pub fn n_duties(&self) -> usize {
        self.duty_breaks.len() + 1
    }

    pub fn flying(&self, inst: &Instance) -> i64 {
        self.flights.iter().map(|&f| inst.flights[f].duration()).sum()
    }

    /// Time away from base: first departure to last arrival.
    pub fn tafb(&self, inst: &Instance) -> i64 {
        match (self.flights.first(), self.flights.last()) {
            (Some(&a), Some(&b)) => inst.flights[b].arrival - inst.flights[a].departure,
            _ => 0,
        }
    }

    /// Calendar days touched.
    pub fn days(&self, inst: &Instance) -> i64 {
        match (self.flights.first(), self.flights.last()) {
            (Some(&a), Some(&b)) => day_of(inst.flights[b].arrival - 1) - day_of(inst.flights[a].departure) + 1,
            _ => 0,
        }
    }
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        self.rules.validate()?;
        let nc = self.cities.len();
        if self.bases.iter().any(|&b| b >= nc) {
            return Err(Error::Config("base index out of range".into()));
        }
        for (i, f) in self.flights.iter().enumerate() {
            if f.id != i {
                return Err(Error::Integrity(format!("flight at position {i} has id {}", f.id)));
            }
            if f.origin >= nc || f.destination >= nc {
                return Err(Error::Integrity(format!("flight {i} references an unknown city")));
            }
            if f.duration() <= 0 {
                return Err(Error::Integrity(format!("flight {i} has non-positive duration")));
            }
        }
        for p in &self.ground_truth {
            if p.flights.iter().any(|&f| f >= self.flights.len()) {
                return Err(Error::Integrity("ground truth references an unknown flight".into()));
            }
        }
        Ok(())
    }

    pub fn is_base(&self, city: usize) -> bool {
        self.bases.contains(&city)
    }

    pub fn aircraft_types(&self) -> usize {
        self.flights.iter().map(|f| f.aircraft + 1).max().unwrap_or(1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Duty breaks at every gap of at least `min_rest`.
    pub fn canonical_breaks(&self, flights: &[usize]) -> Vec<usize> {
        (1..flights.len())
            .filter(|&k| self.flights[flights[k]].departure - self.flights[flights[k - 1]].arrival >= self.rules.min_rest)
            .collect()
    }

    /// A pairing over `flights` based at the first origin, with canonical
    /// duty breaks.
    pub fn canonical_pairing(&self, flights: Vec<usize>) -> Pairing {
        let base = flights.first().map_or(0, |&f| self.flights[f].origin);
        let duty_breaks = self.canonical_breaks(&flights);
        Pairing { base, flights, duty_breaks }
    }
}

/// Audit a pairing against every rule, connectivity, and the base start and
/// end; returns each violated rule once.
pub fn check_pairing_feasibility(p: &Pairing, inst: &Instance) -> Result<Verdict> {
    let r = &inst.rules;
    let mut v = Vec::new();
    if p.flights.is_empty() {
        return Ok(Verdict { feasible: false, violated: vec![Rule::BaseStart] });
    }
    if p.flights.iter().any(|&f| f >= inst.flights.len()) {
        return Err(Error::Contract("pairing references an unknown flight".into()));
    }
    let fl = |k: usize| &inst.flights[p.flights[k]];
    for k in 1..p.flights.len() {
        if fl(k).departure < fl(k - 1).departure {
            return Err(Error::Contract("pairing flights are not in chronological order".into()));
        }
    }
    if p.duty_breaks.windows(2).any(|w| w[0] >= w[1]) || p.duty_breaks.iter().any(|&b| b == 0 || b >= p.flights.len()) {
        return Err(Error::Contract("duty breaks must be increasing interior indices".into()));
    }
    if !inst.is_base(p.base) || fl(0).origin != p.base {
        v.push(Rule::BaseStart);
    }
    if fl(p.flights.len() - 1).destination != p.base {
        v.push(Rule::BaseEnd);
    }
    for k in 1..p.flights.len() {
        if fl(k - 1).destination != fl(k).origin {
            v.push(Rule::Connectivity);
        }
        let gap = fl(k).departure - fl(k - 1).arrival;
        if p.duty_breaks.contains(&k) {
            if gap < r.min_rest {
                v.push(Rule::MinRest);
            }
        } else if gap < r.min_connection {
            v.push(Rule::MinConnection);
        }
    }
    for d in p.duties() {
        if d.len() > r.max_flights_per_duty {
            v.push(Rule::MaxFlightsPerDuty);
        }
        if fl(d.end - 1).arrival - fl(d.start).departure > r.max_duty_span {
            v.push(Rule::MaxDutySpan);
        }
    }
    if p.flights.len() > r.max_landings_per_pairing {
        v.push(Rule::MaxLandings);
    }
    if p.flying(inst) > r.max_flying_per_pairing {
        v.push(Rule::MaxFlying);
    }
    if p.days(inst) > r.max_days_per_pairing {
        v.push(Rule::MaxDays);
    }
    if p.n_duties() > r.max_duties_per_pairing {
        v.push(Rule::MaxDuties);
    }
    v.sort_unstable();
    v.dedup();
    Ok(Verdict { feasible: v.is_empty(), violated: v })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Base 0, outstation 1; flights as `(origin, destination, dep, arr)`.
    pub(crate) fn toy(flights: &[(usize, usize, i64, i64)]) -> Instance {
        Instance {
            cities: vec!["AAA".into(), "BBB".into(), "CCC".into()],
            bases: vec![0],
            rules: RuleSet::default(),
            horizon_days: 7,
            flights: flights
                .iter()
                .enumerate()
                .map(|(id, &(o, d, dep, arr))| Flight { id, origin: o, destination: d, aircraft: 0, departure: dep, arrival: arr })
                .collect(),
            ground_truth: vec![],
        }
    }

    fn verdict(inst: &Instance, flights: Vec<usize>, breaks: Vec<usize>) -> Verdict {
        check_pairing_feasibility(&Pairing { base: 0, flights, duty_breaks: breaks }, inst).unwrap()
    }

    #[test]
    fn empty_pairing_has_no_base_start() {
        let inst = toy(&[]);
        let v = verdict(&inst, vec![], vec![]);
        assert!(!v.feasible);
        assert_eq!(v.violated, vec![Rule::BaseStart]);
    }

    #[test]
    fn out_and_back_is_feasible() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 760, 860)]);
        assert!(verdict(&inst, vec![0, 1], vec![]).feasible);
    }

    #[test]
    fn short_connection() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 710, 810)]);
        assert_eq!(verdict(&inst, vec![0, 1], vec![]).violated, vec![Rule::MinConnection]);
    }

    #[test]
    fn short_rest() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 800, 900)]);
        assert_eq!(verdict(&inst, vec![0, 1], vec![1]).violated, vec![Rule::MinRest]);
    }

    #[test]
    fn too_many_flights_in_duty() {
        let mut legs = Vec::new();
        for k in 0..8 {
            let dep = 300 + k * 80;
            legs.push(if k % 2 == 0 { (0, 1, dep, dep + 40) } else { (1, 0, dep, dep + 40) });
        }
        let mut inst = toy(&legs);
        inst.rules.max_duty_span = 10_000;
        let v = verdict(&inst, (0..8).collect(), vec![]);
        assert_eq!(v.violated, vec![Rule::MaxFlightsPerDuty]);
    }

    #[test]
    fn long_duty_span() {
        let inst = toy(&[(0, 1, 100, 400), (1, 0, 800, 1000)]);
        assert_eq!(verdict(&inst, vec![0, 1], vec![]).violated, vec![Rule::MaxDutySpan]);
    }

    #[test]
    fn too_many_landings() {
        let mut legs = Vec::new();
        for k in 0..10 {
            let day = (k / 2) as i64 * MINUTES_PER_DAY / 2;
            let dep = 300 + day + (k % 2) as i64 * 100;
            legs.push(if k % 2 == 0 { (0, 1, dep, dep + 40) } else { (1, 0, dep, dep + 40) });
        }
        let mut inst = toy(&legs);
        inst.rules.max_days_per_pairing = 10;
        inst.rules.max_duties_per_pairing = 10;
        let breaks = inst.canonical_breaks(&(0..10).collect::<Vec<_>>());
        let v = verdict(&inst, (0..10).collect(), breaks);
        assert_eq!(v.violated, vec![Rule::MaxLandings]);
    }

    #[test]
    fn too_much_flying() {
        let mut inst = toy(&[(0, 1, 0, 600), (1, 0, 1500, 2100), (0, 1, 2800, 3400), (1, 0, 4000, 4600)]);
        inst.rules.max_duty_span = 700;
        let v = verdict(&inst, vec![0, 1, 2, 3], vec![1, 2, 3]);
        assert_eq!(v.violated, vec![Rule::MaxFlying]);
    }

    #[test]
    fn too_many_days() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 4 * MINUTES_PER_DAY + 600, 4 * MINUTES_PER_DAY + 700)]);
        assert_eq!(verdict(&inst, vec![0, 1], vec![1]).violated, vec![Rule::MaxDays]);
    }

    #[test]
    fn too_many_duties() {
        let legs: Vec<_> = (0..6)
            .map(|k| {
                let dep = k as i64 * 600;
                if k % 2 == 0 { (0, 1, dep, dep + 60) } else { (1, 0, dep, dep + 60) }
            })
            .collect();
        let mut inst = toy(&legs);
        inst.rules.min_rest = 500;
        let v = verdict(&inst, (0..6).collect(), vec![1, 2, 3, 4, 5]);
        assert_eq!(v.violated, vec![Rule::MaxDuties]);
    }

    #[test]
    fn broken_connection_and_bases() {
        let inst = toy(&[(1, 2, 600, 700), (0, 1, 760, 860)]);
        let v = verdict(&inst, vec![0, 1], vec![]);
        assert_eq!(v.violated, vec![Rule::Connectivity, Rule::BaseStart, Rule::BaseEnd]);
    }

    #[test]
    fn unordered_flights_are_contract_error() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 100, 200)]);
        let p = Pairing { base: 0, flights: vec![0, 1], duty_breaks: vec![] };
        assert!(matches!(check_pairing_feasibility(&p, &inst), Err(Error::Contract(_))));
    }

    #[test]
    fn rule_names() {
        assert_eq!(Rule::MinConnection.to_string(), "min_connection");
        assert_eq!(Rule::MaxDays.to_string(), "max_days");
    }
}
