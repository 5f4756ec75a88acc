use super::{ConnectionMask, Flight, Instance, RuleSet, MINUTES_PER_DAY};
use crate::ckn::FeatureMap;
use crate::error::{Error, Result};
use crate::graph::{FactorGraphModel, LogicFactor, LogicKind};
use crate::trainer::{AuxTargets, CategoricalMap, Embedding, EmbeddingField, NodeInput, StructExample, Template};

const BIN: i64 = 15;
const DURATION_BINS: usize = 32;

fn qualifies(prev: &Flight, f: &Flight, rules: &RuleSet) -> bool {
    let earliest_ok = match rules.connection_mask {
        ConnectionMask::MinConnection => f.departure >= prev.arrival + rules.min_connection,
        ConnectionMask::OrderingOnly => f.departure > prev.arrival,
    };
    f.origin == prev.destination
        && earliest_ok
        && f.departure <= prev.arrival + rules.candidate_window
        && f.aircraft == prev.aircraft
}

/// Flights that may follow `prev`, sorted by departure time and truncated to
/// `max_candidates`.
pub fn build_connection_candidates(prev: &Flight, inst: &Instance) -> Vec<usize> {
    let mut out: Vec<&Flight> = inst.flights.iter().filter(|f| qualifies(prev, f, &inst.rules)).collect();
    out.sort_by_key(|f| (f.departure, f.id));
    out.into_iter().take(inst.rules.max_candidates).map(|f| f.id).collect()
}

pub fn all_candidates(inst: &Instance) -> Vec<Vec<usize>> {
    inst.flights.iter().map(|f| build_connection_candidates(f, inst)).collect()
}

/// Field layout of a connection column: origin, destination, aircraft,
/// connection-gap bin, departure time-of-day bin, duration bin.
pub fn crew_embedding_fields(n_cities: usize, aircraft_types: usize, rules: &RuleSet) -> Vec<EmbeddingField> {
    let field = |name: &str, vocab: usize, dim: usize| EmbeddingField { name: name.into(), vocab, dim };
    vec![
        field("origin", n_cities, 3),
        field("destination", n_cities, 3),
        field("aircraft", aircraft_types, 2),
        field("gap", (rules.candidate_window / BIN) as usize + 1, 3),
        field("time_of_day", (MINUTES_PER_DAY / BIN) as usize, 3),
        field("duration", DURATION_BINS, 2),
    ]
}

/// Categorical columns for `prev`'s candidates; width is always
/// `max_candidates`, missing candidates are empty columns.
pub fn categorical_columns(prev: &Flight, candidates: &[usize], inst: &Instance) -> CategoricalMap {
    let width = inst.rules.max_candidates;
    let gap_bins = inst.rules.candidate_window / BIN;
    let mut columns = vec![None; width];
    for (j, &c) in candidates.iter().take(width).enumerate() {
        let f = &inst.flights[c];
        let gap = ((f.departure - prev.arrival).max(0) / BIN).min(gap_bins) as usize;
        let tod = (f.departure.rem_euclid(MINUTES_PER_DAY) / BIN) as usize;
        let dur = ((f.duration() / BIN) as usize).min(DURATION_BINS - 1);
        columns[j] = Some(vec![f.origin, f.destination, f.aircraft, gap, tod, dur]);
    }
    CategoricalMap { columns }
}

/// `n_d x max_candidates` single-channel map of the embedded candidates.
pub fn encode_example(prev: &Flight, candidates: &[usize], inst: &Instance, embedding: &Embedding) -> Result<FeatureMap> {
    embedding.forward(&categorical_columns(prev, candidates, inst))
}

/// True successor of each flight in the ground truth.
pub fn successor_map(inst: &Instance) -> Vec<Option<usize>> {
    let mut next = vec![None; inst.flights.len()];
    for p in &inst.ground_truth {
        for w in p.flights.windows(2) {
            next[w[0]] = Some(w[1]);
        }
    }
    next
}

/// Candidate rank of the true successor, or the end label.
pub fn gt_labels(inst: &Instance, cands: &[Vec<usize>]) -> Result<Vec<usize>> {
    successor_map(inst)
        .iter()
        .zip(cands)
        .enumerate()
        .map(|(f, (next, c))| match next {
            None => Ok(c.len()),
            Some(n) => c
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Modeling(format!("true successor of flight {f} is not among its candidates"))),
        })
        .collect()
}

/// Node `f` has one label per candidate plus a final end-pairing label; for
/// every flight `b`, at most one `(a, k)` with `cands[a][k] == b` may be on.
pub fn flight_template(inst: &Instance, cands: &[Vec<usize>]) -> Template {
    let end = inst.rules.max_candidates;
    let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inst.flights.len()];
    for (a, c) in cands.iter().enumerate() {
        for (k, &b) in c.iter().enumerate() {
            preds[b].push((a, k));
        }
    }
    Template {
        sizes: cands.iter().map(|c| c.len() + 1).collect(),
        n_classes: end + 1,
        classes: Some(cands.iter().map(|c| (0..c.len()).chain(std::iter::once(end)).collect()).collect()),
        transitions: false,
        logic: preds
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|members| LogicFactor { kind: LogicKind::AtMostOne, members })
            .collect(),
    }
}

/// Graph CRF over flights with the predecessor constraints, unaries from the
/// given per-flight feature vectors.
pub fn build_flight_graph_crf(inst: &Instance, cands: &[Vec<usize>], phis: Vec<Vec<f64>>) -> Result<FactorGraphModel> {
    flight_template(inst, cands).instantiate(phis)
}

pub const OWN_FEATURES: usize = 10;

/// Hand-crafted per-flight features fed to the auxiliary heads: base flags,
/// clock times, duration, the flight's candidate in- and out-degree, and how
/// soon its earliest candidate leaves.
pub fn own_features(inst: &Instance, cands: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = inst.flights.len();
    let mut in_deg = vec![0usize; n];
    let mut best_gap = vec![f64::INFINITY; n];
    for (a, c) in cands.iter().enumerate() {
        for &b in c {
            in_deg[b] += 1;
            let gap = (inst.flights[b].departure - inst.flights[a].arrival) as f64;
            best_gap[b] = best_gap[b].min(gap);
        }
    }
    let day = MINUTES_PER_DAY as f64;
    let k = inst.rules.max_candidates as f64;
    let first_gap = |f: usize| cands[f].first().map(|&c| inst.flights[c].departure - inst.flights[f].arrival);
    inst.flights
        .iter()
        .map(|f| {
            vec![
                inst.is_base(f.origin) as u8 as f64,
                inst.is_base(f.destination) as u8 as f64,
                f.departure.rem_euclid(MINUTES_PER_DAY) as f64 / day,
                f.arrival.rem_euclid(MINUTES_PER_DAY) as f64 / day,
                f.duration() as f64 / 600.0,
                in_deg[f.id] as f64 / k,
                if best_gap[f.id].is_finite() { (best_gap[f.id] / day).min(2.0) } else { 2.0 },
                cands[f.id].len() as f64 / k,
                first_gap(f.id).is_some_and(|g| g < inst.rules.layover_threshold) as u8 as f64,
                first_gap(f.id).map_or(2.0, |g| (g as f64 / day).min(2.0)),
            ]
        })
        .collect()
}

/// One structured example per instance: categorical connection maps, the
/// flight-graph template, and (when ground truth is present) targets for the
/// next-flight, begin-of-pairing, and layover predictions.
pub fn flight_example(inst: &Instance, cands: &[Vec<usize>]) -> Result<StructExample> {
    let inputs = inst
        .flights
        .iter()
        .zip(cands)
        .map(|(f, c)| NodeInput::Categorical(categorical_columns(f, c, inst)))
        .collect();
    let has_truth = !inst.ground_truth.is_empty();
    let label = if has_truth { gt_labels(inst, cands)? } else { cands.iter().map(Vec::len).collect() };
    let mut begin = vec![false; inst.flights.len()];
    let mut layover = vec![None; inst.flights.len()];
    for p in &inst.ground_truth {
        begin[p.flights[0]] = true;
        for k in 1..p.flights.len() {
            layover[p.flights[k - 1]] = Some(p.duty_breaks.contains(&k));
        }
    }
    Ok(StructExample {
        inputs,
        template: flight_template(inst, cands),
        label,
        aux: Some(AuxTargets { own: own_features(inst, cands), begin, layover }),
    })
}

/// Map a node labeling back to successor flights.
pub fn decode_successors(labels: &[usize], cands: &[Vec<usize>]) -> Vec<Option<usize>> {
    labels.iter().zip(cands).map(|(&l, c)| c.get(l).copied()).collect()
}
