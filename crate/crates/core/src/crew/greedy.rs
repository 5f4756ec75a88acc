use serde::{Deserialize, Serialize};

use super::{check_pairing_feasibility, decode_successors, flight_example, successor_map, Instance, Pairing, MINUTES_PER_DAY};
use crate::cpp::{pairing_cost, CostConfig};
use crate::error::{Error, Result};
use crate::inference::{map_inference, Ad3Config};
use crate::trainer::StructCknModel;

/// Per-flight outputs of the three prediction problems.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predictions {
    pub next: Vec<Option<usize>>,
    pub begin: Vec<bool>,
    pub layover: Vec<bool>,
}

impl Predictions {
    /// Perfect predictions read off the ground truth.
    pub fn oracle(inst: &Instance) -> Self {
        let n = inst.flights.len();
        let mut begin = vec![false; n];
        let mut layover = vec![false; n];
        for p in &inst.ground_truth {
            begin[p.flights[0]] = true;
            for &b in &p.duty_breaks {
                layover[p.flights[b - 1]] = true;
            }
        }
        Self { next: successor_map(inst), begin, layover }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub pairings: Vec<Pairing>,
    pub uncovered: Vec<usize>,
}

impl PairingPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn span_days(inst: &Instance, first: usize, last: usize) -> i64 {
    let a = inst.flights[first].departure.div_euclid(MINUTES_PER_DAY);
    let b = (inst.flights[last].arrival - 1).div_euclid(MINUTES_PER_DAY);
    b - a + 1
}

/// Build pairings by following next-flight predictions from every flagged
/// start. Starts away from a base are suppressed, rests are inserted only
/// when the layover flag fires on a long enough gap, and flights after the
/// crew's last return to its base are dropped.
pub fn greedy_build_pairings(pred: &Predictions, inst: &Instance) -> PairingPlan {
    let n = inst.flights.len();
    let rules = &inst.rules;
    let mut covered = vec![false; n];
    let mut pairings = Vec::new();
    for f in 0..n {
        let base = inst.flights[f].origin;
        if !pred.begin[f] || covered[f] || !inst.is_base(base) {
            continue;
        }
        let mut flights = vec![f];
        let mut breaks = Vec::new();
        covered[f] = true;
        let mut cur = f;
        while let Some(nx) = pred.next[cur] {
            if nx >= n || covered[nx] || span_days(inst, f, nx) > rules.max_days_per_pairing {
                break;
            }
            let gap = inst.flights[nx].departure - inst.flights[cur].arrival;
            if pred.layover[cur] && gap >= rules.layover_threshold {
                breaks.push(flights.len());
            }
            flights.push(nx);
            covered[nx] = true;
            cur = nx;
        }
        if let Some(last) = flights.iter().rposition(|&x| inst.flights[x].destination == base) {
            for &x in &flights[last + 1..] {
                covered[x] = false;
            }
            flights.truncate(last + 1);
            breaks.retain(|&b| b < flights.len());
        }
        pairings.push(Pairing { base, flights, duty_breaks: breaks });
    }
    let uncovered = (0..n).filter(|&f| !covered[f]).collect();
    PairingPlan { pairings, uncovered }
}

/// How next-flight labels are decoded from the node scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    /// MAP under the predecessor constraints.
    Constrained,
    /// Independent per-flight argmax.
    Unconstrained,
}

/// Run a trained model on an instance. Without auxiliary heads, pairings
/// begin at base departures with no predicted predecessor and rests follow
/// every gap of at least `min_rest`.
pub fn plan_from_model(
    model: &StructCknModel,
    inst: &Instance,
    cands: &[Vec<usize>],
    decoding: Decoding,
    ad3: &Ad3Config,
) -> Result<Predictions> {
    let ex = flight_example(inst, cands)?;
    let crf = model.crf(&ex)?;
    let labels = match decoding {
        Decoding::Constrained => map_inference(&crf, &model.weights, ad3)?.map_labeling,
        Decoding::Unconstrained => crf
            .potentials(&model.weights)
            .unary
            .iter()
            .map(|u| {
                let mut best = 0;
                for (l, &s) in u.iter().enumerate() {
                    if s > u[best] {
                        best = l;
                    }
                }
                best
            })
            .collect(),
    };
    let next = decode_successors(&labels, cands);
    let (begin, layover) = match model.heads {
        Some(_) => model.aux_probabilities(&ex)?.into_iter().map(|(b, l)| (b > 0.5, l > 0.5)).unzip(),
        None => {
            let mut has_pred = vec![false; next.len()];
            for &x in next.iter().flatten() {
                has_pred[x] = true;
            }
            let begin = inst.flights.iter().map(|f| inst.is_base(f.origin) && !has_pred[f.id]).collect();
            let layover = next
                .iter()
                .enumerate()
                .map(|(f, nx)| nx.is_some_and(|x| inst.flights[x].departure - inst.flights[f].arrival >= inst.rules.min_rest))
                .collect();
            (begin, layover)
        }
    };
    Ok(Predictions { next, begin, layover })
}

/// Pairings starting before `start` (minutes) are illegal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BidPeriod {
    pub start: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakStats {
    /// Pairings in the input plan.
    pub n_pairings: usize,
    /// Cost of the legal plan.
    pub cost: f64,
    /// Share of input pairings that were illegal, in percent.
    pub percent_infeasible: f64,
    pub covered_flights: usize,
}

/// Drop illegal pairings, keeping the longest legal prefix of each where one
/// exists.
pub fn break_illegal(plan: &PairingPlan, inst: &Instance, bid: &BidPeriod, cost: &CostConfig) -> Result<(PairingPlan, BreakStats)> {
    let mut kept = Vec::new();
    let mut uncovered = plan.uncovered.clone();
    let mut illegal = 0usize;
    for p in &plan.pairings {
        let pre_bid = p.flights.first().is_some_and(|&f| inst.flights[f].departure < bid.start);
        if pre_bid {
            illegal += 1;
            uncovered.extend(&p.flights);
            continue;
        }
        if check_pairing_feasibility(p, inst)?.feasible {
            kept.push(p.clone());
            continue;
        }
        illegal += 1;
        let mut prefix = None;
        for len in (1..p.flights.len()).rev() {
            let q = Pairing {
                base: p.base,
                flights: p.flights[..len].to_vec(),
                duty_breaks: p.duty_breaks.iter().copied().filter(|&b| b < len).collect(),
            };
            if check_pairing_feasibility(&q, inst)?.feasible {
                prefix = Some(q);
                break;
            }
        }
        let keep = prefix.as_ref().map_or(0, |q| q.flights.len());
        uncovered.extend(&p.flights[keep..]);
        if let Some(q) = prefix {
            kept.push(q);
        }
    }
    uncovered.sort_unstable();
    uncovered.dedup();
    let total_cost = kept.iter().map(|p| pairing_cost(p, inst, cost)).sum::<Result<f64>>()?;
    let covered_flights = kept.iter().map(|p| p.flights.len()).sum();
    let n = plan.pairings.len();
    let stats = BreakStats {
        n_pairings: n,
        cost: total_cost,
        percent_infeasible: if n == 0 { 0.0 } else { 100.0 * illegal as f64 / n as f64 },
        covered_flights,
    };
    if kept.iter().flat_map(|p| &p.flights).count() + uncovered.len() < inst.flights.len() {
        return Err(Error::Integrity("plan lost track of some flights".into()));
    }
    Ok((PairingPlan { pairings: kept, uncovered }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crew::tests::toy;
    use crate::crew::{generate_instance, GeneratorParams, RuleSet};

    #[test]
    fn oracle_round_trip() {
        for seed in 0..3 {
            let inst = generate_instance(&GeneratorParams { n_flights: 150, seed, ..Default::default() }, &RuleSet::default()).unwrap();
            let plan = greedy_build_pairings(&Predictions::oracle(&inst), &inst);
            let mut got = plan.pairings.clone();
            got.sort_by_key(|p| p.flights[0]);
            assert_eq!(got, inst.ground_truth);
            assert!(plan.uncovered.is_empty());
        }
    }

    #[test]
    fn start_away_from_base_is_suppressed() {
        let inst = toy(&[(1, 0, 600, 700), (0, 1, 760, 860)]);
        let pred = Predictions { next: vec![Some(1), None], begin: vec![true, false], layover: vec![false; 2] };
        let plan = greedy_build_pairings(&pred, &inst);
        assert!(plan.pairings.is_empty());
        assert_eq!(plan.uncovered, vec![0, 1]);
    }

    #[test]
    fn short_gap_gets_no_rest() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 900, 1000)]);
        let pred = Predictions { next: vec![Some(1), None], begin: vec![true, false], layover: vec![true, false] };
        let plan = greedy_build_pairings(&pred, &inst);
        assert_eq!(plan.pairings[0].duty_breaks, Vec::<usize>::new());
    }

    #[test]
    fn tail_after_last_return_is_dropped() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 760, 860), (0, 2, 920, 1000)]);
        let pred = Predictions { next: vec![Some(1), Some(2), None], begin: vec![true, false, false], layover: vec![false; 3] };
        let plan = greedy_build_pairings(&pred, &inst);
        assert_eq!(plan.pairings[0].flights, vec![0, 1]);
        assert_eq!(plan.uncovered, vec![2]);
    }

    #[test]
    fn break_illegal_cases() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 760, 860), (0, 1, 2000, 2100), (1, 0, 2110, 2200)]);
        let good = Pairing { base: 0, flights: vec![0, 1], duty_breaks: vec![] };
        let plan = PairingPlan { pairings: vec![good.clone()], uncovered: vec![2, 3] };
        let (out, stats) = break_illegal(&plan, &inst, &BidPeriod::default(), &CostConfig::default()).unwrap();
        assert_eq!(out, plan);
        assert_eq!(stats.percent_infeasible, 0.0);

        let (out, _) = break_illegal(&plan, &inst, &BidPeriod { start: 650 }, &CostConfig::default()).unwrap();
        assert!(out.pairings.is_empty());
        assert_eq!(out.uncovered, vec![0, 1, 2, 3]);

        let bad = Pairing { base: 0, flights: vec![0, 1, 2, 3], duty_breaks: vec![2] };
        let (out, stats) =
            break_illegal(&PairingPlan { pairings: vec![bad], uncovered: vec![] }, &inst, &BidPeriod::default(), &CostConfig::default())
                .unwrap();
        assert_eq!(out.pairings, vec![good]);
        assert_eq!(out.uncovered, vec![2, 3]);
        assert_eq!(stats.percent_infeasible, 100.0);
        for p in &out.pairings {
            assert!(check_pairing_feasibility(p, &inst).unwrap().feasible);
        }
    }
}
