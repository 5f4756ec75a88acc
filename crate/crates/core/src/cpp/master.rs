use serde::{Deserialize, Serialize};

use super::pool::ColumnPool;
use super::simplex::{Basis, Lp};
use crate::crew::Instance;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Penalties {
    /// Cost of leaving one flight uncovered.
    pub undercover: f64,
    /// Cost of one deadhead (a flight covered more than once).
    pub overcover: f64,
    pub allow_deadheads: bool,
}

impl Default for Penalties {
    fn default() -> Self {
        Self { undercover: 1e6, overcover: 500.0, allow_deadheads: true }
    }
}

/// Per-base worked-time shares and the penalty per minute of deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseTargets {
    pub shares: Vec<f64>,
    pub penalty: f64,
}

impl BaseTargets {
    pub fn validate(&self, n_bases: usize) -> Result<()> {
        if self.shares.len() != n_bases {
            return Err(Error::Config(format!("{} base shares for {n_bases} bases", self.shares.len())));
        }
        let s: f64 = self.shares.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.shares.iter().any(|&r| r < 0.0) {
            return Err(Error::Config(format!("base shares must be non-negative and sum to 1, got {s}")));
        }
        if !(self.penalty >= 0.0) {
            return Err(Error::Config("base penalty must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Column(usize),
    Under(usize),
    Over(usize),
    DevPlus(usize),
    DevMinus(usize),
}

/// Set-partitioning master over a column pool. Each row is a set of flights
/// that must be covered together: singletons normally, plan pairings when
/// aggregated. Flights in no row are outside the master: columns may touch
/// them, but they are neither constrained nor counted.
#[derive(Clone, Debug)]
pub struct MasterProblem {
    pub n_flights: usize,
    pub pool: ColumnPool,
    pub penalties: Penalties,
    pub base_targets: Option<BaseTargets>,
    /// Base city of each base index; matches `Instance::bases`.
    pub bases: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
    /// Pool columns that take part in the LP.
    pub active: Vec<usize>,
    /// Initial incumbent as pool indices.
    pub incumbent: Option<Vec<usize>>,
    /// Clusters for the aggregated pre-solve.
    pub clusters: Option<Vec<Vec<usize>>>,
}

impl MasterProblem {
    pub fn new(inst: &Instance, pool: ColumnPool, penalties: Penalties) -> Result<Self> {
        let max_cost = pool.columns.iter().map(|c| c.cost).fold(0.0, f64::max);
        if penalties.undercover <= max_cost || penalties.undercover <= penalties.overcover {
            return Err(Error::Config("undercover penalty must exceed every pairing cost and the overcover penalty".into()));
        }
        if penalties.overcover < 0.0 {
            return Err(Error::Config("overcover penalty must be non-negative".into()));
        }
        let n = inst.flights.len();
        if pool.columns.iter().any(|c| c.rows.iter().any(|&f| f >= n)) {
            return Err(Error::Dimension("column covers an unknown flight".into()));
        }
        Ok(Self {
            n_flights: n,
            active: (0..pool.len()).collect(),
            pool,
            penalties,
            base_targets: None,
            bases: inst.bases.clone(),
            rows: (0..n).map(|f| vec![f]).collect(),
            incumbent: None,
            clusters: None,
        })
    }

    /// Aggregated copy: one row per cluster, keeping only columns that cover
    /// each cluster entirely or not at all.
    pub fn aggregated(&self, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut owner = vec![usize::MAX; self.n_flights];
        for (k, c) in clusters.iter().enumerate() {
            for &f in c {
                if f >= self.n_flights || owner[f] != usize::MAX {
                    return Err(Error::Contract(format!("flight {f} in two clusters or out of range")));
                }
                owner[f] = k;
            }
        }
        let covered: Vec<usize> = self.rows.iter().flatten().copied().collect();
        if covered.iter().any(|&f| owner[f] == usize::MAX) || covered.len() != clusters.iter().map(Vec::len).sum::<usize>() {
            return Err(Error::Contract("clusters must partition the master's flights".into()));
        }
        let active = self
            .active
            .iter()
            .copied()
            .filter(|&p| {
                let rows = &self.pool.columns[p].rows;
                rows.iter().filter(|&&f| owner[f] != usize::MAX).all(|&f| {
                    let c = &clusters[owner[f]];
                    c.iter().all(|g| rows.binary_search(g).is_ok())
                })
            })
            .collect();
        Ok(Self { rows: clusters.to_vec(), active, clusters: None, incumbent: None, ..self.clone() })
    }

    fn row_of_flight(&self) -> Vec<Option<usize>> {
        let mut r = vec![None; self.n_flights];
        for (i, row) in self.rows.iter().enumerate() {
            for &f in row {
                r[f] = Some(i);
            }
        }
        r
    }

    fn base_index(&self, city: usize) -> Option<usize> {
        self.bases.iter().position(|&b| b == city)
    }

    /// Constraint entries of each active column, aligned with `active`.
    pub fn column_entries(&self) -> Result<Vec<Vec<(usize, f64)>>> {
        let nr = self.rows.len();
        let row_of = self.row_of_flight();
        let shares = self.base_targets.as_ref().map(|t| &t.shares);
        self.active
            .iter()
            .map(|&p| {
                let col = &self.pool.columns[p];
                let mut entries: Vec<(usize, f64)> = Vec::new();
                for r in col.rows.iter().filter_map(|&f| row_of[f]) {
                    if !entries.iter().any(|&(i, _)| i == r) {
                        entries.push((r, 1.0));
                    }
                }
                entries.sort_by_key(|e| e.0);
                if let Some(sh) = shares {
                    let b = self.base_index(col.pairing.base);
                    for (k, &rho) in sh.iter().enumerate() {
                        let own = if Some(k) == b { col.worked } else { 0.0 };
                        let v = own - rho * col.worked;
                        if v != 0.0 {
                            entries.push((nr + k, v));
                        }
                    }
                }
                Ok(entries)
            })
            .collect()
    }

    /// The LP with slack and deviation variables only.
    pub fn slack_lp(&self) -> (Lp, Vec<Var>) {
        let nr = self.rows.len();
        let nb = if self.base_targets.is_some() { self.bases.len() } else { 0 };
        let mut lp = Lp { n_rows: nr + nb, cols: vec![], cost: vec![], lower: vec![], upper: vec![], rhs: vec![1.0; nr] };
        lp.rhs.extend(vec![0.0; nb]);
        let mut vars = Vec::new();
        let mut push = |lp: &mut Lp, entry: (usize, f64), cost: f64, upper: f64, v: Var| {
            lp.cols.push(vec![entry]);
            lp.cost.push(cost);
            lp.lower.push(0.0);
            lp.upper.push(upper);
            vars.push(v);
        };
        for (r, row) in self.rows.iter().enumerate() {
            let size = row.len() as f64;
            push(&mut lp, (r, 1.0), self.penalties.undercover * size, 1.0, Var::Under(r));
            let over_ub = if self.penalties.allow_deadheads { f64::INFINITY } else { 0.0 };
            push(&mut lp, (r, -1.0), self.penalties.overcover * size, over_ub, Var::Over(r));
        }
        if let Some(t) = &self.base_targets {
            for k in 0..nb {
                push(&mut lp, (nr + k, -1.0), t.penalty, f64::INFINITY, Var::DevPlus(k));
                push(&mut lp, (nr + k, 1.0), t.penalty, f64::INFINITY, Var::DevMinus(k));
            }
        }
        (lp, vars)
    }

    /// The full LP relaxation and the meaning of each variable.
    pub fn lp(&self) -> Result<(Lp, Vec<Var>)> {
        let (mut lp, mut vars) = self.slack_lp();
        for (entries, &p) in self.column_entries()?.into_iter().zip(&self.active) {
            lp.cols.push(entries);
            lp.cost.push(self.pool.columns[p].cost);
            lp.lower.push(0.0);
            lp.upper.push(1.0);
            vars.push(Var::Column(p));
        }
        Ok((lp, vars))
    }

    /// A primal-feasible slack basis for the current bounds: every column
    /// nonbasic at its bound, one slack per row absorbing the residual.
    /// `None` when the fixings already over-cover a row that forbids deadheads.
    pub fn slack_basis(&self, lp: &Lp, vars: &[Var]) -> Option<Basis> {
        let at_upper: Vec<bool> = (0..lp.n_cols()).map(|j| lp.lower[j] > 0.0 && lp.upper[j] == lp.lower[j]).collect();
        let x: Vec<f64> = (0..lp.n_cols()).map(|j| lp.lower[j]).collect();
        let act = lp.activity(&x);
        let mut heads = vec![usize::MAX; lp.n_rows];
        let nr = self.rows.len();
        for (j, v) in vars.iter().enumerate() {
            let res = |r: usize| lp.rhs[r] - act[r];
            match *v {
                Var::Under(r) if res(r) >= 0.0 => heads[r] = j,
                Var::Over(r) if res(r) < 0.0 => heads[r] = j,
                Var::DevPlus(k) if res(nr + k) <= 0.0 => heads[nr + k] = j,
                Var::DevMinus(k) if res(nr + k) > 0.0 => heads[nr + k] = j,
                _ => {}
            }
        }
        debug_assert!(heads.iter().all(|&h| h != usize::MAX));
        let fits = heads.iter().enumerate().all(|(r, &h)| {
            let v = (lp.rhs[r] - act[r]) / lp.cols[h][0].1;
            v <= lp.upper[h] + 1e-9
        });
        fits.then_some(Basis { heads, at_upper })
    }

    /// Objective split of an integer selection of pool columns.
    pub fn evaluate(&self, selection: &[usize]) -> Result<Evaluation> {
        let row_of = self.row_of_flight();
        let mut cover = vec![0usize; self.rows.len()];
        let mut pairing_cost = 0.0;
        let mut worked = vec![0.0; self.bases.len()];
        for &p in selection {
            let col = self.pool.columns.get(p).ok_or_else(|| Error::Contract(format!("unknown column {p}")))?;
            pairing_cost += col.cost;
            let mut seen: Vec<usize> = Vec::new();
            for r in col.rows.iter().filter_map(|&f| row_of[f]) {
                if !seen.contains(&r) {
                    seen.push(r);
                    cover[r] += 1;
                }
            }
            if let Some(b) = self.base_index(col.pairing.base) {
                worked[b] += col.worked;
            }
        }
        let mut undercovered = Vec::new();
        let mut deadheads = Vec::new();
        for (r, &c) in cover.iter().enumerate() {
            if c == 0 {
                undercovered.extend(&self.rows[r]);
            } else {
                for _ in 1..c {
                    deadheads.extend(&self.rows[r]);
                }
            }
        }
        if !self.penalties.allow_deadheads && !deadheads.is_empty() {
            return Err(Error::Contract("selection covers a flight twice while deadheads are disabled".into()));
        }
        let slack_cost =
            self.penalties.undercover * undercovered.len() as f64 + self.penalties.overcover * deadheads.len() as f64;
        let global_cost = match &self.base_targets {
            Some(t) => {
                let total: f64 = worked.iter().sum();
                t.penalty * worked.iter().zip(&t.shares).map(|(w, r)| (w - r * total).abs()).sum::<f64>()
            }
            None => 0.0,
        };
        Ok(Evaluation { pairing_cost, slack_cost, global_cost, undercovered, deadheads })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub pairing_cost: f64,
    pub slack_cost: f64,
    pub global_cost: f64,
    pub undercovered: Vec<usize>,
    pub deadheads: Vec<usize>,
}

impl Evaluation {
    /// Pairings plus slacks, excluding the base-balance penalty.
    pub fn solution_cost(&self) -> f64 {
        self.pairing_cost + self.slack_cost
    }

    pub fn total(&self) -> f64 {
        self.solution_cost() + self.global_cost
    }
}

/// Attach soft per-base workload targets.
pub fn add_base_constraints(mut master: MasterProblem, targets: BaseTargets) -> Result<MasterProblem> {
    targets.validate(master.bases.len())?;
    master.base_targets = Some(targets);
    Ok(master)
}
