use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::crew::{all_candidates, check_pairing_feasibility, Instance, Pairing, MINUTES_PER_DAY};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// Fixed charge per duty.
    pub per_duty: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { per_duty: 120.0 }
    }
}

/// `max(flying, 0.5 * TAFB, 60 * duties) + per_duty * duties`.
pub fn pairing_cost(p: &Pairing, inst: &Instance, cfg: &CostConfig) -> Result<f64> {
    if p.flights.is_empty() {
        return Err(Error::Contract("cannot price an empty pairing".into()));
    }
    let duties = p.n_duties() as f64;
    let flying = p.flying(inst) as f64;
    let tafb = p.tafb(inst) as f64;
    Ok(flying.max(0.5 * tafb).max(60.0 * duties) + cfg.per_duty * duties)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Enumerated,
    InitialSolution,
    Deadhead,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub pairing: Pairing,
    pub cost: f64,
    /// Covered flights, ascending.
    pub rows: Vec<usize>,
    /// Flying minutes, used by the base-balance rows.
    pub worked: f64,
    pub provenance: Provenance,
}

impl Column {
    pub fn new(pairing: Pairing, inst: &Instance, cfg: &CostConfig, provenance: Provenance) -> Result<Self> {
        let cost = pairing_cost(&pairing, inst, cfg)?;
        let mut rows = pairing.flights.clone();
        rows.sort_unstable();
        rows.dedup();
        if rows.len() != pairing.flights.len() {
            return Err(Error::Contract("pairing repeats a flight".into()));
        }
        let worked = pairing.flying(inst) as f64;
        Ok(Self { pairing, cost, rows, worked, provenance })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnPool {
    pub columns: Vec<Column>,
    pub truncated: bool,
    #[serde(skip)]
    index: HashMap<Pairing, usize>,
}

impl ColumnPool {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn find(&self, p: &Pairing) -> Option<usize> {
        if self.index.len() != self.columns.len() {
            return self.columns.iter().position(|c| &c.pairing == p);
        }
        self.index.get(p).copied()
    }

    /// Insert unless an identical pairing is already present; returns its index.
    pub fn insert(&mut self, col: Column) -> usize {
        if let Some(i) = self.find(&col.pairing) {
            return i;
        }
        if self.index.len() == self.columns.len() {
            self.index.insert(col.pairing.clone(), self.columns.len());
        }
        self.columns.push(col);
        self.columns.len() - 1
    }

    pub fn rebuild_index(&mut self) {
        self.index = self.columns.iter().enumerate().map(|(i, c)| (c.pairing.clone(), i)).collect();
    }
}

/// Which successors the depth-first search may follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionGraph {
    /// Every same-city departure at least `min_connection` later.
    All,
    /// The masked, truncated candidate lists of the prediction task.
    #[default]
    Candidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationLimits {
    pub max_columns: usize,
    /// Extra cap on calendar days, on top of the rule set.
    pub max_days: Option<i64>,
    pub graph: ConnectionGraph,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self { max_columns: 200_000, max_days: None, graph: ConnectionGraph::Candidates }
    }
}

struct Search<'a> {
    inst: &'a Instance,
    succ: Vec<Vec<usize>>,
    max_days: i64,
    cost: &'a CostConfig,
    limit: usize,
    pool: ColumnPool,
    path: Vec<usize>,
    breaks: Vec<usize>,
}

#[derive(Clone, Copy)]
struct State {
    duty_start: i64,
    duty_flights: usize,
    flying: i64,
    first_day: i64,
}

impl Search<'_> {
    fn dfs(&mut self, base: usize, st: State) -> Result<bool> {
        let inst = self.inst;
        let r = &inst.rules;
        let cur = &inst.flights[*self.path.last().expect("non-empty path")];
        if cur.destination == base {
            if self.pool.len() >= self.limit {
                self.pool.truncated = true;
                return Ok(false);
            }
            let p = Pairing { base, flights: self.path.clone(), duty_breaks: self.breaks.clone() };
            self.pool.insert(Column::new(p, inst, self.cost, Provenance::Enumerated)?);
        }
        if self.path.len() >= r.max_landings_per_pairing {
            return Ok(true);
        }
        for k in 0..self.succ[cur.id].len() {
            let g = &inst.flights[self.succ[cur.id][k]];
            let gap = g.departure - cur.arrival;
            if g.origin != cur.destination || gap < r.min_connection {
                continue;
            }
            let rest = gap >= r.min_rest;
            let next = State {
                duty_start: if rest { g.departure } else { st.duty_start },
                duty_flights: if rest { 1 } else { st.duty_flights + 1 },
                flying: st.flying + g.duration(),
                first_day: st.first_day,
            };
            let days = (g.arrival - 1).div_euclid(MINUTES_PER_DAY) - st.first_day + 1;
            if next.duty_flights > r.max_flights_per_duty
                || g.arrival - next.duty_start > r.max_duty_span
                || next.flying > r.max_flying_per_pairing
                || days > self.max_days
                || self.breaks.len() + rest as usize + 1 > r.max_duties_per_pairing
            {
                continue;
            }
            if rest {
                self.breaks.push(self.path.len());
            }
            self.path.push(g.id);
            let go_on = self.dfs(base, next)?;
            self.path.pop();
            if rest {
                self.breaks.pop();
            }
            if !go_on {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Depth-first enumeration of legal pairings from every base departure,
/// pruning on each monotone rule; duties split at every gap of at least
/// `min_rest`.
pub fn enumerate_pairings(inst: &Instance, limits: &EnumerationLimits, cost: &CostConfig) -> Result<ColumnPool> {
    let r = &inst.rules;
    let succ = match limits.graph {
        ConnectionGraph::Candidates => all_candidates(inst),
        ConnectionGraph::All => {
            let mut by_city: Vec<Vec<usize>> = vec![Vec::new(); inst.cities.len()];
            for f in &inst.flights {
                by_city[f.origin].push(f.id);
            }
            inst.flights
                .iter()
                .map(|f| {
                    by_city[f.destination]
                        .iter()
                        .copied()
                        .filter(|&g| inst.flights[g].departure >= f.arrival + r.min_connection)
                        .collect()
                })
                .collect()
        }
    };
    let mut s = Search {
        inst,
        succ,
        max_days: limits.max_days.map_or(r.max_days_per_pairing, |d| d.min(r.max_days_per_pairing)),
        cost,
        limit: limits.max_columns,
        pool: ColumnPool::default(),
        path: Vec::new(),
        breaks: Vec::new(),
    };
    for f in &inst.flights {
        if !inst.is_base(f.origin) {
            continue;
        }
        let days = (f.arrival - 1).div_euclid(MINUTES_PER_DAY) - f.departure.div_euclid(MINUTES_PER_DAY) + 1;
        if f.duration() > r.max_duty_span || f.duration() > r.max_flying_per_pairing || days > s.max_days {
            continue;
        }
        s.path.push(f.id);
        let st = State {
            duty_start: f.departure,
            duty_flights: 1,
            flying: f.duration(),
            first_day: f.departure.div_euclid(MINUTES_PER_DAY),
        };
        let go_on = s.dfs(f.origin, st)?;
        s.path.pop();
        if !go_on {
            break;
        }
    }
    if s.pool.is_empty() {
        return Err(Error::Modeling("no feasible pairing exists".into()));
    }
    debug_assert!(s
        .pool
        .columns
        .iter()
        .all(|c| check_pairing_feasibility(&c.pairing, inst).map(|v| v.feasible).unwrap_or(false)));
    Ok(s.pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crew::{Flight, RuleSet};

    fn toy(flights: &[(usize, usize, i64, i64)]) -> Instance {
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

    #[test]
    fn cost_formula() {
        let inst = toy(&[(0, 1, 600, 650), (1, 0, 710, 760)]);
        let p = Pairing { base: 0, flights: vec![0, 1], duty_breaks: vec![] };
        // flying 100, TAFB 160
        assert_eq!(pairing_cost(&p, &inst, &CostConfig::default()).unwrap(), 100.0 + 120.0);
        assert!(pairing_cost(&Pairing { base: 0, flights: vec![], duty_breaks: vec![] }, &inst, &CostConfig::default()).is_err());
    }

    #[test]
    fn layover_raises_cost() {
        let inst = toy(&[(0, 1, 600, 650), (1, 0, 1300, 1350)]);
        let one = Pairing { base: 0, flights: vec![0, 1], duty_breaks: vec![] };
        let two = Pairing { base: 0, flights: vec![0, 1], duty_breaks: vec![1] };
        let c = CostConfig::default();
        assert!(pairing_cost(&two, &inst, &c).unwrap() > pairing_cost(&one, &inst, &c).unwrap());
    }

    #[test]
    fn out_and_back_world() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 760, 860)]);
        let pool = enumerate_pairings(&inst, &EnumerationLimits { graph: ConnectionGraph::All, ..Default::default() }, &CostConfig::default())
            .unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.columns[0].pairing.flights, vec![0, 1]);
    }

    #[test]
    fn no_pairing_is_modeling_error() {
        let inst = toy(&[(0, 1, 600, 700)]);
        assert!(matches!(enumerate_pairings(&inst, &EnumerationLimits::default(), &CostConfig::default()), Err(Error::Modeling(_))));
    }

    #[test]
    fn truncation_flag() {
        let inst = toy(&[(0, 1, 600, 700), (1, 0, 760, 860), (1, 0, 900, 1000)]);
        let lim = EnumerationLimits { max_columns: 1, graph: ConnectionGraph::All, ..Default::default() };
        let pool = enumerate_pairings(&inst, &lim, &CostConfig::default()).unwrap();
        assert_eq!(pool.len(), 1);
        assert!(pool.truncated);
    }
}
