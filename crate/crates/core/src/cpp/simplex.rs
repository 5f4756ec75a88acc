use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `min c'x  s.t.  A x = b,  lower <= x <= upper`, with `A` stored by
/// sparse columns. Lower bounds must be finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Lp {
    pub n_rows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl Lp {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cols.len();
        if self.cost.len() != n || self.lower.len() != n || self.upper.len() != n || self.rhs.len() != self.n_rows {
            return Err(Error::Dimension("LP arrays disagree in length".into()));
        }
        for (j, col) in self.cols.iter().enumerate() {
            if !self.lower[j].is_finite() || self.upper[j] < self.lower[j] {
                return Err(Error::Contract(format!("bad bounds on variable {j}")));
            }
            if col.iter().any(|&(i, _)| i >= self.n_rows) {
                return Err(Error::Dimension(format!("variable {j} references a missing row")));
            }
        }
        Ok(())
    }

    /// `A x`
    pub fn activity(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_rows];
        for (col, &v) in self.cols.iter().zip(x) {
            if v != 0.0 {
                for &(i, a) in col {
                    r[i] += a * v;
                }
            }
        }
        r
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Basic variable per row plus the bound each nonbasic variable sits at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub heads: Vec<usize>,
    pub at_upper: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_every: 400,
            bland_after: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    pub iterations: usize,
}

impl LpSolution {
    /// Largest violation of `Ax = b` and of the bounds.
    pub fn primal_residual(&self, lp: &Lp) -> f64 {
        let act = lp.activity(&self.x);
        let rows = act.iter().zip(&lp.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let bounds = self
            .x
            .iter()
            .enumerate()
            .map(|(j, &v)| (lp.lower[j] - v).max(v - lp.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest sign violation of the reduced costs given where each variable sits.
    pub fn dual_residual(&self, lp: &Lp, tol: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..lp.n_cols() {
            let d = lp.cost[j] - lp.cols[j].iter().map(|&(i, a)| a * self.duals[i]).sum::<f64>();
            let at_lower = self.x[j] <= lp.lower[j] + tol;
            let at_upper = self.x[j] >= lp.upper[j] - tol;
            let v = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => (-d).max(0.0),
                (false, true) => d.max(0.0),
                (false, false) => d.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

struct Simplex<'a> {
    lp: &'a Lp,
    opts: &'a SimplexOptions,
    heads: Vec<usize>,
    in_basis: Vec<bool>,
    at_upper: Vec<bool>,
    binv: DMatrix<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a Lp, start: &Basis, opts: &'a SimplexOptions) -> Result<Self> {
        let m = lp.n_rows;
        if start.heads.len() != m || start.at_upper.len() != lp.n_cols() {
            return Err(Error::Dimension("basis does not match the LP".into()));
        }
        let mut in_basis = vec![false; lp.n_cols()];
        for &h in &start.heads {
            if h >= lp.n_cols() || in_basis[h] {
                return Err(Error::Contract("basis heads must be distinct variables".into()));
            }
            in_basis[h] = true;
        }
        let mut at_upper = start.at_upper.clone();
        for j in 0..lp.n_cols() {
            if at_upper[j] && !lp.upper[j].is_finite() {
                at_upper[j] = false;
            }
        }
        let mut s = Self {
            lp,
            opts,
            heads: start.heads.clone(),
            in_basis,
            at_upper,
            binv: DMatrix::zeros(m, m),
            lo: lp.lower.clone(),
            up: lp.upper.clone(),
            xb: vec![0.0; m],
            iterations: 0,
            since_refactor: 0,
        };
        s.refactor()?;
        Ok(s)
    }

    /// Widen every non-fixed bound by a small deterministic amount so ratio
    /// ties become rare.
    fn perturb(&mut self) -> Result<()> {
        for j in 0..self.lp.n_cols() {
            if self.lo[j] == self.up[j] {
                continue;
            }
            let h = (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 44;
            let eps = 1e-7 * (1.0 + h as f64 / (1u64 << 20) as f64);
            self.lo[j] -= eps * (1.0 + self.lo[j].abs());
            if self.up[j].is_finite() {
                self.up[j] += eps * (1.0 + self.up[j].abs());
            }
        }
        self.refactor()
    }

    fn unperturb(&mut self) -> Result<()> {
        self.lo.copy_from_slice(&self.lp.lower);
        self.up.copy_from_slice(&self.lp.upper);
        self.refactor()
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.up[j]
        } else {
            self.lo[j]
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.lp.n_rows;
        let mut b = DMatrix::zeros(m, m);
        for (k, &h) in self.heads.iter().enumerate() {
            for &(i, a) in &self.lp.cols[h] {
                b[(i, k)] += a;
            }
        }
        self.binv = b.lu().try_inverse().ok_or_else(|| Error::Numeric("singular basis".into()))?;
        let mut r = self.lp.rhs.clone();
        for j in 0..self.lp.n_cols() {
            if !self.in_basis[j] {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    for &(i, a) in &self.lp.cols[j] {
                        r[i] -= a * v;
                    }
                }
            }
        }
        self.xb = (&self.binv * nalgebra::DVector::from_vec(r)).data.into();
        self.since_refactor = 0;
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.lp.n_rows;
        let cb: Vec<f64> = self.heads.iter().map(|&h| self.lp.cost[h]).collect();
        (0..m).map(|i| self.binv.column(i).dot(&nalgebra::DVectorView::from_slice(&cb, m))).collect()
    }

    fn reduced(&self, j: usize, y: &[f64]) -> f64 {
        self.lp.cost[j] - self.lp.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.lp.n_rows;
        let mut out = vec![0.0; m];
        for &(i, a) in &self.lp.cols[j] {
            let col = self.binv.column(i);
            for k in 0..m {
                out[k] += a * col[k];
            }
        }
        out
    }

    fn movable(&self, j: usize) -> bool {
        !self.in_basis[j] && self.up[j] > self.lo[j]
    }

    fn basis_change(&mut self, r: usize, q: usize, alpha: &[f64], leaving_to_upper: bool, entering_value: f64) -> Result<()> {
        let m = self.lp.n_rows;
        let piv = alpha[r];
        for i in 0..m {
            let v = self.binv[(r, i)] / piv;
            if v == 0.0 {
                continue;
            }
            let mut col = self.binv.column_mut(i);
            for k in 0..m {
                col[k] -= alpha[k] * v;
            }
            col[r] = v;
        }
        let leaving = self.heads[r];
        self.in_basis[leaving] = false;
        self.at_upper[leaving] = leaving_to_upper;
        self.in_basis[q] = true;
        self.at_upper[q] = false;
        self.heads[r] = q;
        self.xb[r] = entering_value;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.opts.max_iterations {
            return Err(Error::Numeric("simplex iteration limit reached".into()));
        }
        Ok(())
    }

    fn primal_feasible(&self) -> bool {
        let t = self.opts.primal_tol;
        self.heads
            .iter()
            .zip(&self.xb)
            .all(|(&h, &v)| v >= self.lo[h] - t && v <= self.up[h] + t)
    }

    fn dual_feasible(&self) -> bool {
        let y = self.duals();
        (0..self.lp.n_cols()).filter(|&j| self.movable(j)).all(|j| {
            let d = self.reduced(j, &y);
            if self.at_upper[j] {
                d <= self.opts.dual_tol
            } else {
                d >= -self.opts.dual_tol
            }
        })
    }

    /// Move boxed nonbasic variables to the bound their reduced cost favors.
    fn flip_to_dual_feasible(&mut self) -> Result<()> {
        let y = self.duals();
        let mut flipped = false;
        for j in 0..self.lp.n_cols() {
            if !self.movable(j) || !self.up[j].is_finite() {
                continue;
            }
            let d = self.reduced(j, &y);
            if (!self.at_upper[j] && d < -self.opts.dual_tol) || (self.at_upper[j] && d > self.opts.dual_tol) {
                self.at_upper[j] = !self.at_upper[j];
                flipped = true;
            }
        }
        if flipped {
            self.refactor()?;
        }
        Ok(())
    }

    fn primal(&mut self) -> Result<()> {
        let mut degenerate = 0usize;
        let mut weights = vec![1.0; self.lp.n_cols()];
        loop {
            let bland = degenerate >= self.opts.bland_after;
            let y = self.duals();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.lp.n_cols() {
                if !self.movable(j) {
                    continue;
                }
                let d = self.reduced(j, &y);
                let gain = if self.at_upper[j] { d } else { -d };
                if gain > self.opts.dual_tol {
                    if bland {
                        best = Some((j, gain));
                        break;
                    }
                    let score = gain * gain / weights[j];
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((j, score));
                    }
                }
            }
            let Some((q, _)) = best else { return Ok(()) };
            self.tick()?;
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let alpha = self.ftran(q);
            let mut best_t = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None;
            for k in 0..alpha.len() {
                let rate = -dir * alpha[k];
                let h = self.heads[k];
                let (t, to_upper) = if rate < -self.opts.pivot_tol {
                    (((self.xb[k] - self.lo[h]) / -rate).max(0.0), false)
                } else if rate > self.opts.pivot_tol && self.up[h].is_finite() {
                    (((self.up[h] - self.xb[k]) / rate).max(0.0), true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some(_) if t < best_t - 1e-12 => true,
                    Some((r, _)) if t <= best_t + 1e-12 => {
                        if bland {
                            h < self.heads[r]
                        } else {
                            alpha[k].abs() > alpha[r].abs()
                        }
                    }
                    Some(_) => false,
                };
                if better {
                    best_t = t;
                    leave = Some((k, to_upper));
                }
            }
            let flip = self.up[q] - self.lo[q];
            if flip <= best_t {
                leave = None;
            }
            let t_min = best_t.min(flip);
            if !t_min.is_finite() {
                return Err(Error::Numeric("LP is unbounded".into()));
            }
            if t_min <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for k in 0..alpha.len() {
                self.xb[k] -= t_min * dir * alpha[k];
            }
            match leave {
                None => self.at_upper[q] = !self.at_upper[q],
                Some((r, to_upper)) => {
                    let aq = alpha[r];
                    let wq = weights[q];
                    for j in 0..self.lp.n_cols() {
                        if j != q && self.movable(j) {
                            let arj: f64 = self.lp.cols[j].iter().map(|&(i, v)| v * self.binv[(r, i)]).sum();
                            if arj != 0.0 {
                                weights[j] = weights[j].max((arj / aq).powi(2) * wq);
                            }
                        }
                    }
                    weights[self.heads[r]] = (wq / (aq * aq)).max(1.0);
                    let value = self.nonbasic_value(q) + dir * t_min;
                    self.basis_change(r, q, &alpha, to_upper, value)?;
                }
            }
        }
    }

    fn dual(&mut self) -> Result<()> {
        let mut stall = 0usize;
        loop {
            let bland = stall >= self.opts.bland_after;
            let t = self.opts.primal_tol;
            let mut pick: Option<(usize, f64)> = None;
            for k in 0..self.heads.len() {
                let h = self.heads[k];
                let v = self.xb[k];
                let infeas = if v < self.lo[h] - t {
                    self.lo[h] - v
                } else if v > self.up[h] + t {
                    v - self.up[h]
                } else {
                    continue;
                };
                let better = match pick {
                    None => true,
                    Some((r, s)) => {
                        if bland {
                            h < self.heads[r]
                        } else {
                            infeas > s
                        }
                    }
                };
                if better {
                    pick = Some((k, infeas));
                }
            }
            let Some((r, _)) = pick else { return Ok(()) };
            self.tick()?;
            let h = self.heads[r];
            let increase = self.xb[r] < self.lo[h];
            let bound = if increase { self.lo[h] } else { self.up[h] };
            let y = self.duals();
            let rho: Vec<f64> = self.binv.row(r).iter().copied().collect();
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.lp.n_cols() {
                if !self.movable(j) {
                    continue;
                }
                let a: f64 = self.lp.cols[j].iter().map(|&(i, v)| v * rho[i]).sum();
                let up = !self.at_upper[j];
                let eligible = if increase == up { a < -self.opts.pivot_tol } else { a > self.opts.pivot_tol };
                if !eligible {
                    continue;
                }
                let ratio = self.reduced(j, &y).abs() / a.abs();
                let better = match entering {
                    None => true,
                    Some((q, best, aq)) => {
                        if ratio < best - 1e-12 {
                            true
                        } else if ratio <= best + 1e-12 {
                            if bland {
                                j < q
                            } else {
                                a.abs() > aq.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    entering = Some((j, ratio, a));
                }
            }
            let Some((q, ratio, _)) = entering else {
                return Err(Error::Numeric("LP is infeasible".into()));
            };
            if ratio <= 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
            let alpha = self.ftran(q);
            let step = (self.xb[r] - bound) / alpha[r];
            for k in 0..alpha.len() {
                self.xb[k] -= step * alpha[k];
            }
            let value = self.nonbasic_value(q) + step;
            self.basis_change(r, q, &alpha, !increase, value)?;
        }
    }

    fn finish(self) -> LpSolution {
        let n = self.lp.n_cols();
        let mut x: Vec<f64> = (0..n).map(|j| if self.in_basis[j] { 0.0 } else { self.nonbasic_value(j) }).collect();
        for (k, &h) in self.heads.iter().enumerate() {
            x[h] = self.xb[k];
        }
        let duals = self.duals();
        let reduced_costs = (0..n).map(|j| if self.in_basis[j] { 0.0 } else { self.reduced(j, &duals) }).collect();
        LpSolution {
            objective: self.lp.objective(&x),
            x,
            duals,
            reduced_costs,
            basis: Basis { heads: self.heads, at_upper: self.at_upper },
            iterations: self.iterations,
        }
    }
}

/// Bounded revised simplex. Runs the primal method from a primal-feasible
/// start and the dual method from a dual-feasible one; Dantzig pricing with
/// a fall back to Bland's rule on degenerate streaks.
pub fn solve_lp(lp: &Lp, start: &Basis, opts: &SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let mut s = Simplex::new(lp, start, opts)?;
    if !s.primal_feasible() {
        s.flip_to_dual_feasible()?;
        if !s.dual_feasible() {
            return Err(Error::Contract("start basis is neither primal nor dual feasible".into()));
        }
        s.dual()?;
    }
    s.perturb()?;
    s.primal()?;
    s.unperturb()?;
    for _ in 0..3 {
        if !s.primal_feasible() {
            s.flip_to_dual_feasible()?;
            s.dual()?;
        }
        s.primal()?;
        s.refactor()?;
        if s.primal_feasible() {
            break;
        }
    }
    Ok(s.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Dense Phase-I/II tableau with Bland's rule over `x >= 0` and equality rows.
    fn tableau_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
        let m = a.len();
        let n = c.len();
        let w = n + m + 1;
        let mut t = vec![vec![0.0; w]; m];
        for i in 0..m {
            t[i][..n].copy_from_slice(&a[i]);
            t[i][n + i] = 1.0;
            t[i][w - 1] = b[i];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| {
            loop {
                let red = |j: usize, t: &Vec<Vec<f64>>| cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
                let Some(q) = (0..allowed).find(|&j| !basis.contains(&j) && red(j, t) < -1e-11) else { return };
                let mut r = None;
                let mut best = f64::INFINITY;
                for i in 0..m {
                    if t[i][q] > 1e-11 {
                        let ratio = t[i][w - 1] / t[i][q];
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && r.is_none_or(|k: usize| basis[i] < basis[k])) {
                            best = ratio.min(best);
                            r = Some(i);
                        }
                    }
                }
                let r = r.expect("bounded");
                let p = t[r][q];
                for v in t[r].iter_mut() {
                    *v /= p;
                }
                for i in 0..m {
                    if i != r {
                        let f = t[i][q];
                        if f != 0.0 {
                            for j in 0..w {
                                t[i][j] -= f * t[r][j];
                            }
                        }
                    }
                }
                basis[r] = q;
            }
        };
        let mut phase1 = vec![0.0; n + m];
        phase1[n..].iter_mut().for_each(|v| *v = 1.0);
        run(&mut t, &mut basis, &phase1, n + m);
        let mut phase2 = c.to_vec();
        phase2.extend(vec![1e9; m]);
        run(&mut t, &mut basis, &phase2, n);
        (0..m).map(|i| phase2[basis[i]] * t[i][w - 1]).sum()
    }

    fn slack_start(lp: &Lp, slack_offset: usize) -> Basis {
        Basis { heads: (0..lp.n_rows).map(|i| slack_offset + i).collect(), at_upper: vec![false; lp.n_cols()] }
    }

    #[test]
    fn single_flight_single_column() {
        let lp = Lp {
            n_rows: 1,
            cols: vec![vec![(0, 1.0)], vec![(0, 1.0)]],
            cost: vec![5.0, 1e6],
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
            rhs: vec![1.0],
        };
        let s = solve_lp(&lp, &slack_start(&lp, 1), &SimplexOptions::default()).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.objective, 5.0);
    }

    fn random_partitioning(seed: u64, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![vec![0.0; n]; m];
        for j in 0..n {
            let k = rng.gen_range(1..=3);
            for _ in 0..k {
                a[rng.gen_range(0..m)][j] = 1.0;
            }
        }
        let c = (0..n).map(|_| rng.gen_range(1.0..20.0_f64).round()).collect();
        (a, c)
    }

    #[test]
    fn matches_dense_tableau_on_random_partitioning() {
        for seed in 0..30 {
            let (m, n) = (10, 30);
            let (a, c) = random_partitioning(seed, m, n);
            let pen = 1000.0;
            // Columns plus one artificial per row.
            let mut cols: Vec<Vec<(usize, f64)>> =
                (0..n).map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, 1.0)).collect()).collect();
            cols.extend((0..m).map(|i| vec![(i, 1.0)]));
            let mut cost = c.clone();
            cost.extend(vec![pen; m]);
            let lp = Lp {
                n_rows: m,
                cols,
                cost: cost.clone(),
                lower: vec![0.0; n + m],
                upper: vec![f64::INFINITY; n + m],
                rhs: vec![1.0; m],
            };
            let s = solve_lp(&lp, &slack_start(&lp, n), &SimplexOptions::default()).unwrap();
            let mut dense = a.clone();
            for (i, row) in dense.iter_mut().enumerate() {
                row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            }
            let oracle = tableau_min(&dense, &vec![1.0; m], &cost);
            assert!((s.objective - oracle).abs() < 1e-6, "seed {seed}: {} vs {oracle}", s.objective);
            assert!(s.primal_residual(&lp) < 1e-7);
            assert!(s.dual_residual(&lp, 1e-9) < 1e-7);
            assert!((s.objective - lp.objective(&s.x)).abs() < 1e-7);
            // complementary slackness: basic variables have zero reduced cost
            for &h in &s.basis.heads {
                let d = lp.cost[h] - lp.cols[h].iter().map(|&(i, v)| v * s.duals[i]).sum::<f64>();
                assert!(d.abs() < 1e-7);
            }
        }
    }

    #[test]
    fn dual_simplex_after_bound_change() {
        let (a, c) = random_partitioning(7, 8, 20);
        let (m, n) = (8, 20);
        let mut cols: Vec<Vec<(usize, f64)>> =
            (0..n).map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, 1.0)).collect()).collect();
        cols.extend((0..m).map(|i| vec![(i, 1.0)]));
        let mut cost = c;
        cost.extend(vec![1000.0; m]);
        let mut lp = Lp {
            n_rows: m,
            cols,
            cost,
            lower: vec![0.0; n + m],
            upper: vec![1.0; n + m],
            rhs: vec![1.0; m],
        };
        let opts = SimplexOptions::default();
        let s = solve_lp(&lp, &slack_start(&lp, n), &opts).unwrap();
        let j = (0..n).find(|&j| s.x[j] > 0.5).unwrap();
        lp.upper[j] = 0.0;
        let warm = solve_lp(&lp, &s.basis, &opts).unwrap();
        let cold = solve_lp(&lp, &slack_start(&lp, n), &opts).unwrap();
        assert!((warm.objective - cold.objective).abs() < 1e-7);
        assert!(warm.primal_residual(&lp) < 1e-7);
        assert!(warm.objective >= s.objective - 1e-9);
    }

    #[test]
    fn upper_bounds_flip_without_pivot() {
        // min -x0 - x1, x0 + x1 + s = 3, x in [0, 1], s >= 0
        let lp = Lp {
            n_rows: 1,
            cols: vec![vec![(0, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
            cost: vec![-1.0, -1.0, 0.0],
            lower: vec![0.0; 3],
            upper: vec![1.0, 1.0, f64::INFINITY],
            rhs: vec![3.0],
        };
        let s = solve_lp(&lp, &slack_start(&lp, 2), &SimplexOptions::default()).unwrap();
        assert_eq!(s.objective, -2.0);
        assert_eq!(s.x, vec![1.0, 1.0, 1.0]);
    }
}
