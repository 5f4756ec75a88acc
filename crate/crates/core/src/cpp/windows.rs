use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bnb::{branch_and_bound, BnbConfig};
use super::master::{add_base_constraints, BaseTargets, MasterProblem, Penalties};
use super::pool::{ColumnPool, CostConfig};
use super::warm::{warm_start, WarmMode};
use crate::crew::{Instance, Pairing, PairingPlan, MINUTES_PER_DAY};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_days: i64,
    pub overlap_days: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { window_days: 7, overlap_days: 2 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub penalties: Penalties,
    pub base_targets: Option<BaseTargets>,
    pub cost: CostConfig,
    pub bnb: BnbConfig,
    pub warm_mode: Option<WarmMode>,
}

/// Column names follow the solver-statistics and cost tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CppMetrics {
    pub lp_root: f64,
    pub n_fractional_root: usize,
    pub n_nodes: usize,
    pub best_lp: f64,
    pub best_int: f64,
    pub solution_cost: f64,
    pub global_cost: f64,
    pub total_cost: f64,
    pub n_pairings: usize,
    pub n_deadheads: usize,
    pub n_undercovered: usize,
    pub n_columns: usize,
    pub n_windows: usize,
    pub optimal: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvedPairing {
    pub base: usize,
    pub flights: Vec<usize>,
    pub duty_breaks: Vec<usize>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CppSolution {
    pub pairings: Vec<SolvedPairing>,
    pub deadheads: Vec<usize>,
    pub undercovered: Vec<usize>,
    pub metrics: CppMetrics,
}

impl CppSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// How many times each flight is operated or ridden.
    pub fn coverage(&self, n_flights: usize) -> Vec<usize> {
        let mut c = vec![0; n_flights];
        for p in &self.pairings {
            for &f in &p.flights {
                c[f] += 1;
            }
        }
        c
    }
}

pub fn write_metrics_csv(rows: &[CppMetrics], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn base_master(inst: &Instance, pool: &ColumnPool, cfg: &SolveConfig) -> Result<MasterProblem> {
    let m = MasterProblem::new(inst, pool.clone(), cfg.penalties.clone())?;
    match &cfg.base_targets {
        Some(t) => add_base_constraints(m, t.clone()),
        None => Ok(m),
    }
}

/// Solve the horizon in overlapping windows. After each window, pairings that
/// end before the next window starts are frozen and their flights leave the
/// problem; everything else is re-optimized in the next window.
pub fn solve_windows(
    inst: &Instance,
    pool: &ColumnPool,
    plan: Option<&PairingPlan>,
    cfg: &SolveConfig,
    win: &WindowConfig,
) -> Result<CppSolution> {
    if !(win.window_days > win.overlap_days && win.overlap_days >= 0) {
        return Err(Error::Config("windows need window_days > overlap_days >= 0".into()));
    }
    let t0 = Instant::now();
    let full = base_master(inst, pool, cfg)?;
    let n = inst.flights.len();
    let step = win.window_days - win.overlap_days;
    let mut frozen = vec![false; n];
    let mut committed: Vec<Pairing> = Vec::new();
    let mut metrics = CppMetrics::default();
    let mut all_optimal = true;
    let mut start = 0;
    loop {
        let end = start + win.window_days;
        let last = end >= inst.horizon_days;
        let inside = |f: usize| last || inst.flights[f].departure < end * MINUTES_PER_DAY;
        let free: Vec<bool> = (0..n).map(|f| !frozen[f] && inside(f)).collect();
        let mut master = full.clone();
        master.rows = (0..n).filter(|&f| free[f]).map(|f| vec![f]).collect();
        master.active = (0..master.pool.len())
            .filter(|&p| {
                let fl = &master.pool.columns[p].pairing.flights;
                free[fl[0]] && fl.iter().all(|&f| !frozen[f])
            })
            .collect();
        if let (Some(plan), Some(mode)) = (plan, cfg.warm_mode) {
            let sub = PairingPlan {
                pairings: plan.pairings.iter().filter(|p| p.flights.iter().all(|&f| free[f])).cloned().collect(),
                uncovered: vec![],
            };
            master = warm_start(master, &sub, inst, &cfg.cost, mode)?;
        }
        if !master.rows.is_empty() {
            let sol = branch_and_bound(&master, &cfg.bnb)?;
            let s = &sol.stats;
            metrics.lp_root += s.lp_root;
            metrics.n_fractional_root += s.n_fractional_root;
            metrics.n_nodes += s.n_nodes;
            metrics.best_lp += s.best_lp;
            metrics.n_columns = metrics.n_columns.max(master.active.len());
            all_optimal &= s.optimal;
            let horizon_cut = (start + step) * MINUTES_PER_DAY;
            for &p in &sol.selection {
                let pairing = &master.pool.columns[p].pairing;
                let arrival = inst.flights[*pairing.flights.last().expect("non-empty")].arrival;
                if last || arrival < horizon_cut {
                    for &f in &pairing.flights {
                        frozen[f] = true;
                    }
                    committed.push(pairing.clone());
                }
            }
        }
        metrics.n_windows += 1;
        if last {
            break;
        }
        start += step;
    }
    let mut stitched = full.clone();
    let mut selection = Vec::new();
    for p in committed {
        let col = super::pool::Column::new(p, inst, &cfg.cost, super::pool::Provenance::Enumerated)?;
        selection.push(stitched.pool.insert(col));
    }
    let ev = stitched.evaluate(&selection)?;
    let mut pairings: Vec<SolvedPairing> = selection
        .iter()
        .map(|&p| {
            let c = &stitched.pool.columns[p];
            SolvedPairing {
                base: c.pairing.base,
                flights: c.pairing.flights.clone(),
                duty_breaks: c.pairing.duty_breaks.clone(),
                cost: c.cost,
            }
        })
        .collect();
    pairings.sort_by_key(|p| p.flights[0]);
    metrics.best_int = ev.total();
    metrics.solution_cost = ev.solution_cost();
    metrics.global_cost = ev.global_cost;
    metrics.total_cost = ev.total();
    metrics.n_pairings = pairings.len();
    metrics.n_deadheads = ev.deadheads.len();
    metrics.n_undercovered = ev.undercovered.len();
    metrics.optimal = all_optimal && metrics.n_windows == 1;
    metrics.wall_seconds = t0.elapsed().as_secs_f64();
    let mut deadheads = ev.deadheads.clone();
    deadheads.sort_unstable();
    let mut undercovered = ev.undercovered.clone();
    undercovered.sort_unstable();
    Ok(CppSolution { pairings, deadheads, undercovered, metrics })
}
