use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::master::{Evaluation, MasterProblem, Var};
use super::simplex::{solve_lp, Basis, Lp, LpSolution, SimplexOptions};
use crate::error::Result;

const INTEGRAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BranchRule {
    /// Value closest to 0.5; ties to the lowest index.
    #[default]
    MostFractional,
    /// Lowest-index fractional variable.
    FirstFractional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    /// Relative optimality gap.
    pub gap_tol: f64,
    pub node_limit: usize,
    pub branch_rule: BranchRule,
    /// Run a fix-and-resolve dive from the root relaxation.
    pub dive: bool,
    pub time_limit_seconds: Option<f64>,
    #[serde(skip)]
    pub simplex: SimplexOptions,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            node_limit: 5_000,
            branch_rule: BranchRule::MostFractional,
            dive: true,
            time_limit_seconds: None,
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BnbStats {
    pub lp_root: f64,
    pub n_fractional_root: usize,
    pub n_nodes: usize,
    pub best_lp: f64,
    pub best_int: f64,
    /// Incumbent value before the root was solved, if one was supplied.
    pub initial_int: Option<f64>,
    pub optimal: bool,
    pub lp_iterations: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    /// Selected pool columns, ascending.
    pub selection: Vec<usize>,
    pub evaluation: Evaluation,
    pub stats: BnbStats,
}

/// A search node: fixings on pairing variables and the parent's LP value.
#[derive(Clone, Debug)]
pub struct BnbNode {
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub fixings: Vec<(usize, bool)>,
    warm: Option<std::rc::Rc<SparseBasis>>,
}

#[derive(Debug)]
struct SparseBasis {
    heads: Vec<usize>,
    upper: Vec<usize>,
}

impl SparseBasis {
    fn of(b: &Basis) -> Self {
        Self { heads: b.heads.clone(), upper: b.at_upper.iter().enumerate().filter(|(_, &u)| u).map(|(j, _)| j).collect() }
    }

    fn expand(&self, n: usize) -> Basis {
        let mut at_upper = vec![false; n];
        for &j in &self.upper {
            at_upper[j] = true;
        }
        Basis { heads: self.heads.clone(), at_upper }
    }
}

impl PartialEq for BnbNode {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for BnbNode {}
impl PartialOrd for BnbNode {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for BnbNode {
    // max-heap: smaller bound first, then older node
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.id.cmp(&self.id))
    }
}

struct Tree<'a> {
    master: &'a MasterProblem,
    cfg: &'a BnbConfig,
    lp: Lp,
    vars: Vec<Var>,
    base_lower: Vec<f64>,
    base_upper: Vec<f64>,
    /// Constraint entries of every active column and its LP position, if any.
    entries: Vec<Vec<(usize, f64)>>,
    lp_pos: Vec<Option<usize>>,
    incumbent: Option<(Vec<usize>, Evaluation)>,
    iterations: usize,
}

const PRICE_BATCH: usize = 400;
const SEED_PER_ROW: usize = 3;

impl<'a> Tree<'a> {
    fn new(master: &'a MasterProblem, cfg: &'a BnbConfig) -> Result<Self> {
        let (lp, vars) = master.slack_lp();
        let entries = master.column_entries()?;
        let mut t = Tree {
            master,
            cfg,
            base_lower: lp.lower.clone(),
            base_upper: lp.upper.clone(),
            lp,
            vars,
            lp_pos: vec![None; entries.len()],
            entries,
            incumbent: None,
            iterations: 0,
        };
        let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); master.rows.len()];
        for (k, e) in t.entries.iter().enumerate() {
            for &(r, _) in e {
                if r < master.rows.len() {
                    by_row[r].push(k);
                }
            }
        }
        let mut seed = Vec::new();
        for ks in &mut by_row {
            let per_flight = |k: usize| master.pool.columns[master.active[k]].cost / master.pool.columns[master.active[k]].rows.len() as f64;
            ks.sort_by(|&a, &b| per_flight(a).total_cmp(&per_flight(b)).then(a.cmp(&b)));
            seed.extend(ks.iter().take(SEED_PER_ROW));
        }
        if let Some(inc) = &master.incumbent {
            seed.extend(master.active.iter().enumerate().filter(|(_, p)| inc.contains(p)).map(|(k, _)| k));
        }
        seed.sort_unstable();
        seed.dedup();
        t.add_columns(&seed);
        Ok(t)
    }

    fn add_columns(&mut self, ks: &[usize]) {
        for &k in ks {
            if self.lp_pos[k].is_some() {
                continue;
            }
            self.lp_pos[k] = Some(self.lp.n_cols());
            self.lp.cols.push(self.entries[k].clone());
            self.lp.cost.push(self.master.pool.columns[self.master.active[k]].cost);
            for v in [&mut self.lp.lower, &mut self.base_lower] {
                v.push(0.0);
            }
            for v in [&mut self.lp.upper, &mut self.base_upper] {
                v.push(1.0);
            }
            self.vars.push(Var::Column(self.master.active[k]));
        }
    }

    /// Active columns outside the LP with negative reduced cost, most negative first.
    fn price(&self, duals: &[f64]) -> Vec<usize> {
        let mut neg: Vec<(f64, usize)> = Vec::new();
        for (k, e) in self.entries.iter().enumerate() {
            if self.lp_pos[k].is_some() {
                continue;
            }
            let d = self.master.pool.columns[self.master.active[k]].cost - e.iter().map(|&(i, a)| a * duals[i]).sum::<f64>();
            if d < -1e-7 {
                neg.push((d, k));
            }
        }
        neg.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neg.into_iter().take(PRICE_BATCH).map(|(_, k)| k).collect()
    }

    fn inc_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(_, e)| e.total())
    }

    fn cutoff(&self) -> f64 {
        let v = self.inc_value();
        v - self.cfg.gap_tol * v.abs().max(1.0)
    }

    fn offer(&mut self, selection: Vec<usize>) -> Result<()> {
        let ev = self.master.evaluate(&selection)?;
        if ev.total() < self.inc_value() - 1e-9 {
            self.incumbent = Some((selection, ev));
        }
        Ok(())
    }

    fn solve_once(&mut self, warm: Option<Basis>) -> Result<Option<LpSolution>> {
        if let Some(w) = warm {
            if let Ok(s) = solve_lp(&self.lp, &w, &self.cfg.simplex) {
                return Ok(Some(s));
            }
        }
        match self.master.slack_basis(&self.lp, &self.vars) {
            Some(b) => Ok(Some(solve_lp(&self.lp, &b, &self.cfg.simplex)?)),
            None => Ok(None),
        }
    }

    /// Solve the node LP to optimality over the whole active pool.
    fn solve(&mut self, fixings: &[(usize, bool)], warm: Option<&SparseBasis>) -> Result<Option<LpSolution>> {
        for &(j, one) in fixings {
            if one {
                self.lp.lower[j] = 1.0;
            } else {
                self.lp.upper[j] = 0.0;
            }
        }
        let mut basis = warm.map(|w| w.expand(self.lp.n_cols()));
        let out = loop {
            let Some(sol) = self.solve_once(basis.take())? else { break None };
            self.iterations += sol.iterations;
            let add = self.price(&sol.duals);
            if add.is_empty() {
                break Some(sol);
            }
            self.add_columns(&add);
            let mut b = sol.basis;
            b.at_upper.resize(self.lp.n_cols(), false);
            basis = Some(b);
        };
        self.lp.lower.copy_from_slice(&self.base_lower);
        self.lp.upper.copy_from_slice(&self.base_upper);
        Ok(out)
    }

    fn is_column(&self, j: usize) -> bool {
        matches!(self.vars[j], Var::Column(_))
    }

    fn fractional(&self, x: &[f64]) -> Vec<usize> {
        (0..x.len()).filter(|&j| self.is_column(j) && x[j] > INTEGRAL_TOL && x[j] < 1.0 - INTEGRAL_TOL).collect()
    }

    fn selection(&self, x: &[f64]) -> Vec<usize> {
        let mut s: Vec<usize> = (0..x.len())
            .filter(|&j| x[j] > 0.5)
            .filter_map(|j| match self.vars[j] {
                Var::Column(p) => Some(p),
                _ => None,
            })
            .collect();
        s.sort_unstable();
        s
    }

    fn branch_var(&self, x: &[f64], frac: &[usize]) -> usize {
        match self.cfg.branch_rule {
            BranchRule::FirstFractional => frac[0],
            BranchRule::MostFractional => {
                let mut best = frac[0];
                for &j in frac {
                    if (x[j] - 0.5).abs() < (x[best] - 0.5).abs() {
                        best = j;
                    }
                }
                best
            }
        }
    }

    fn dive(&mut self, root: &LpSolution) -> Result<()> {
        let mut fix: Vec<(usize, bool)> = Vec::new();
        let mut cur = root.clone();
        for _ in 0..self.master.rows.len().max(1) {
            let frac = self.fractional(&cur.x);
            if frac.is_empty() {
                return self.offer(self.selection(&cur.x));
            }
            let mut j = frac[0];
            for &k in &frac {
                if cur.x[k] > cur.x[j] {
                    j = k;
                }
            }
            fix.push((j, true));
            let warm = SparseBasis::of(&cur.basis);
            match self.solve(&fix, Some(&warm))? {
                Some(s) if s.objective < self.cutoff() => cur = s,
                _ => return Ok(()),
            }
        }
        Ok(())
    }
}

/// Best-bound branch-and-bound over the pairing variables of `master`.
pub fn branch_and_bound(master: &MasterProblem, cfg: &BnbConfig) -> Result<MasterSolution> {
    let t0 = Instant::now();
    let mut seed: Option<Vec<usize>> = master.incumbent.clone();
    let mut agg_iterations = 0;
    if let Some(clusters) = &master.clusters {
        let agg = master.aggregated(clusters)?;
        let sub = branch_and_bound(&agg, cfg)?;
        agg_iterations = sub.stats.lp_iterations;
        let better = match &seed {
            Some(s) => sub.evaluation.total() < master.evaluate(s)?.total(),
            None => true,
        };
        if better {
            seed = Some(sub.selection);
        }
    }
    let mut tree = Tree::new(master, cfg)?;
    tree.iterations = agg_iterations;
    let mut stats = BnbStats::default();
    if let Some(s) = seed {
        tree.offer(s)?;
        stats.initial_int = Some(tree.inc_value());
    }
    if tree.incumbent.is_none() {
        tree.offer(Vec::new())?;
    }
    let root = tree.solve(&[], None)?.expect("the slack basis is feasible without fixings");
    stats.lp_root = root.objective;
    let frac = tree.fractional(&root.x);
    stats.n_fractional_root = frac.len();
    stats.n_nodes = 1;
    let mut open = BinaryHeap::new();
    let mut next_id = 1;
    let timed_out = |t0: &Instant| cfg.time_limit_seconds.is_some_and(|l| t0.elapsed().as_secs_f64() > l);
    let mut limit_hit = false;
    if frac.is_empty() {
        tree.offer(tree.selection(&root.x))?;
    } else {
        if cfg.dive {
            tree.dive(&root)?;
        }
        if root.objective < tree.cutoff() {
            let j = tree.branch_var(&root.x, &frac);
            let warm = std::rc::Rc::new(SparseBasis::of(&root.basis));
            for one in [true, false] {
                open.push(BnbNode { id: next_id, depth: 1, bound: root.objective, fixings: vec![(j, one)], warm: Some(warm.clone()) });
                next_id += 1;
            }
        }
    }
    while let Some(node) = open.pop() {
        if node.bound >= tree.cutoff() {
            open.clear();
            break;
        }
        if stats.n_nodes >= cfg.node_limit || timed_out(&t0) {
            open.push(node);
            limit_hit = true;
            break;
        }
        stats.n_nodes += 1;
        let Some(sol) = tree.solve(&node.fixings, node.warm.as_deref())? else { continue };
        if sol.objective >= tree.cutoff() {
            continue;
        }
        let frac = tree.fractional(&sol.x);
        if frac.is_empty() {
            tree.offer(tree.selection(&sol.x))?;
            continue;
        }
        let j = tree.branch_var(&sol.x, &frac);
        let warm = std::rc::Rc::new(SparseBasis::of(&sol.basis));
        for one in [true, false] {
            let mut fixings = node.fixings.clone();
            fixings.push((j, one));
            open.push(BnbNode { id: next_id, depth: node.depth + 1, bound: sol.objective, fixings, warm: Some(warm.clone()) });
            next_id += 1;
        }
    }
    let (selection, evaluation) = tree.incumbent.clone().expect("an incumbent always exists");
    stats.best_int = evaluation.total();
    stats.best_lp = open.iter().map(|n| n.bound).fold(stats.best_int, f64::min);
    stats.optimal = !limit_hit;
    stats.lp_iterations = tree.iterations;
    stats.wall_seconds = t0.elapsed().as_secs_f64();
    Ok(MasterSolution { selection, evaluation, stats })
}
