use rand::Rng as _;

use super::linesearch::newton_linesearch;
use super::oracle::{feasible_uniform, MarginalOracle};
use crate::error::{Error, Result};
use crate::graph::{dot, Example};
use crate::inference::{entropy_marginals, kl_marginals, safe_ln, CliqueMarginals};
use crate::rng::{rng_from, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct SdcaConfig {
    /// Defaults to `1/n`.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub uniform_fraction: f64,
    pub initial_gap: f64,
    pub line_search_tol: f64,
    pub line_search_max_iter: usize,
}

impl Default for SdcaConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            seed: 0,
            uniform_fraction: 0.8,
            initial_gap: 100.0,
            line_search_tol: 1e-10,
            line_search_max_iter: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdcaState {
    pub mu: Vec<CliqueMarginals>,
    pub w: Vec<f64>,
    pub gaps: Vec<f64>,
    pub lambda: f64,
    pub step_count: u64,
    uniform_fraction: f64,
    line_search_tol: f64,
    line_search_max_iter: usize,
    rng: Rng,
}

/// Result of one coordinate step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    pub gap: f64,
}

fn check_data(data: &[Example]) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::Config("empty dataset".into()))?;
    let dim = first.model.dim;
    if data.iter().any(|ex| ex.model.dim != dim) {
        return Err(Error::Config("examples disagree on the feature dimension".into()));
    }
    Ok(dim)
}

/// `(1/(lambda n)) sum_i (F(x_i, y_i) - E_mu_i F(x_i, .))`
pub fn conjugate_weights(data: &[Example], mu: &[CliqueMarginals], lambda: f64) -> Result<Vec<f64>> {
    let dim = check_data(data)?;
    let mut w = vec![0.0; dim];
    let scale = 1.0 / (lambda * data.len() as f64);
    for (ex, m) in data.iter().zip(mu) {
        ex.model.add_features(&ex.label, scale, &mut w);
        ex.model.add_expected_features(m, -scale, &mut w);
    }
    Ok(w)
}

/// First and second derivative of `gamma -> H(mu + gamma delta)` for the
/// tree-decomposed entropy.
fn entropy_derivatives(mu: &CliqueMarginals, nu: &CliqueMarginals, gamma: f64) -> (f64, f64) {
    let deg = mu.degrees();
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut acc = |a: &[f64], b: &[f64], coef: f64| {
        for (&x, &y) in a.iter().zip(b) {
            let d = y - x;
            if d == 0.0 {
                continue;
            }
            let p = x + gamma * d;
            d1 += coef * d * safe_ln(p);
            d2 += coef * d * d / p.max(1e-300);
        }
    };
    for (a, b) in mu.edges.iter().zip(&nu.edges) {
        acc(a, b, -1.0);
    }
    for ((a, b), &k) in mu.nodes.iter().zip(&nu.nodes).zip(&deg) {
        acc(a, b, k as f64 - 1.0);
    }
    (d1, d2)
}

impl SdcaState {
    pub fn init(data: &[Example], cfg: &SdcaConfig) -> Result<Self> {
        check_data(data)?;
        let n = data.len();
        let lambda = cfg.lambda.unwrap_or(1.0 / n as f64);
        if !(lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.uniform_fraction) {
            return Err(Error::Config("uniform_fraction must lie in [0, 1]".into()));
        }
        let mu: Vec<CliqueMarginals> = data.iter().map(|ex| feasible_uniform(&ex.model)).collect();
        let w = conjugate_weights(data, &mu, lambda)?;
        Ok(Self {
            mu,
            w,
            gaps: vec![cfg.initial_gap; n],
            lambda,
            step_count: 0,
            uniform_fraction: cfg.uniform_fraction,
            line_search_tol: cfg.line_search_tol,
            line_search_max_iter: cfg.line_search_max_iter,
            rng: rng_from(cfg.seed),
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Uniform with probability `uniform_fraction`, otherwise proportional to
    /// the stored gaps (uniform again when they sum to zero).
    pub fn sample(&mut self) -> usize {
        let n = self.n();
        if self.rng.gen::<f64>() < self.uniform_fraction {
            return self.rng.gen_range(0..n);
        }
        let total: f64 = self.gaps.iter().map(|g| g.max(0.0)).sum();
        if !(total > 0.0) {
            return self.rng.gen_range(0..n);
        }
        let mut r = self.rng.gen::<f64>() * total;
        for (i, g) in self.gaps.iter().enumerate() {
            r -= g.max(0.0);
            if r < 0.0 {
                return i;
            }
        }
        n - 1
    }

    /// Recompute `w` from the stored marginals, for instance after features
    /// have changed.
    pub fn refresh_weights(&mut self, data: &[Example]) -> Result<()> {
        self.w = conjugate_weights(data, &self.mu, self.lambda)?;
        Ok(())
    }

    /// `(1/n) sum_i H(mu_i) - (lambda/2) |w|^2`
    pub fn dual_objective(&self) -> Result<f64> {
        let mut h = 0.0;
        for m in &self.mu {
            h += entropy_marginals(m)?;
        }
        Ok(h / self.n() as f64 - 0.5 * self.lambda * dot(&self.w, &self.w))
    }

    /// One coordinate-ascent step on example `i`.
    pub fn step(&mut self, data: &[Example], i: usize, oracle: &MarginalOracle) -> Result<StepInfo> {
        let ex = &data[i];
        let nu = oracle.marginals(&ex.model, &self.w)?;
        let mu = &self.mu[i];
        let gap = kl_marginals(mu, &nu)?;
        let scale = 1.0 / (self.lambda * self.n() as f64);
        let mut v = vec![0.0; self.w.len()];
        ex.model.add_expected_features(&nu, -scale, &mut v);
        ex.model.add_expected_features(mu, scale, &mut v);
        let wv = dot(&self.w, &v);
        let vv = dot(&v, &v);
        let ln = self.lambda * self.n() as f64;
        let worst_curvature = std::cell::Cell::new(f64::NEG_INFINITY);
        let search = {
            let dphi = |g: f64| entropy_derivatives(mu, &nu, g).0 - ln * (wv + g * vv);
            let d2phi = |g: f64| {
                let h = entropy_derivatives(mu, &nu, g).1 - ln * vv;
                worst_curvature.set(worst_curvature.get().max(h));
                h
            };
            newton_linesearch(dphi, d2phi, 0.5, self.line_search_tol, self.line_search_max_iter)
        };
        if worst_curvature.get() > 1e-9 {
            return Err(Error::Numeric(format!(
                "line search not concave (second derivative {})",
                worst_curvature.get()
            )));
        }
        let gamma = search.gamma;
        if gamma > 0.0 {
            self.mu[i] = mu.interpolate(&nu, gamma);
            for (w, d) in self.w.iter_mut().zip(&v) {
                *w += gamma * d;
            }
        }
        self.gaps[i] = gap.max(0.0);
        self.step_count += 1;
        Ok(StepInfo { gamma, gap })
    }

    /// `n` sampled steps.
    pub fn epoch(&mut self, data: &[Example], oracle: &MarginalOracle) -> Result<()> {
        for _ in 0..self.n() {
            let i = self.sample();
            self.step(data, i, oracle)?;
        }
        Ok(())
    }

    /// `(1/n) sum_i KL(mu_i || nu_i(w))`, refreshing the stored gaps.
    pub fn duality_gap(&mut self, data: &[Example], oracle: &MarginalOracle) -> Result<f64> {
        let mut total = 0.0;
        for (i, ex) in data.iter().enumerate() {
            let nu = oracle.marginals(&ex.model, &self.w)?;
            let g = kl_marginals(&self.mu[i], &nu)?;
            self.gaps[i] = g.max(0.0);
            total += g;
        }
        Ok(total / self.n() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain_model, primal_objective};

    fn toy_data() -> Vec<Example> {
        let xs = [
            (vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![0, 1, 2]),
            (vec![vec![0.5, -1.0], vec![1.0, 0.2]], vec![1, 0]),
            (vec![vec![-0.3, 0.8], vec![0.1, 0.1], vec![0.9, -0.4]], vec![1, 1, 0]),
        ];
        xs.iter().map(|(phi, y)| Example { model: chain_model(phi, 3), label: y.clone() }).collect()
    }

    #[test]
    fn init_is_uniform_and_conjugate() {
        let data = toy_data();
        let s = SdcaState::init(&data, &SdcaConfig::default()).unwrap();
        assert_eq!(s.mu[0].nodes[0], vec![1.0 / 3.0; 3]);
        assert!((s.lambda - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.gaps.iter().all(|&g| g == 100.0));
        let w = conjugate_weights(&data, &s.mu, s.lambda).unwrap();
        assert_eq!(w, s.w);
    }

    #[test]
    fn steps_keep_invariants_and_raise_dual() {
        let data = toy_data();
        let oracle = MarginalOracle::default();
        let mut s = SdcaState::init(&data, &SdcaConfig { seed: 4, ..Default::default() }).unwrap();
        let mut d = s.dual_objective().unwrap();
        for _ in 0..60 {
            let i = s.sample();
            let info = s.step(&data, i, &oracle).unwrap();
            assert!((0.0..=1.0).contains(&info.gamma));
            assert!(info.gap >= -1e-9);
            let nd = s.dual_objective().unwrap();
            assert!(nd >= d - 1e-9, "dual decreased {d} -> {nd}");
            d = nd;
            for m in &s.mu {
                m.validate(1e-9, 1e-9).unwrap();
            }
        }
        let w = conjugate_weights(&data, &s.mu, s.lambda).unwrap();
        assert!(w.iter().zip(&s.w).all(|(a, b)| (a - b).abs() < 1e-6));
        let gap = s.duality_gap(&data, &oracle).unwrap();
        let p = primal_objective(&s.w, &data, s.lambda).unwrap();
        assert!((p - d - gap).abs() < 1e-8, "P - D = {} vs gap {}", p - d, gap);
    }

    #[test]
    fn converges_to_small_gap() {
        let data = toy_data();
        let oracle = MarginalOracle::default();
        let mut s = SdcaState::init(&data, &SdcaConfig::default()).unwrap();
        for _ in 0..300 {
            s.epoch(&data, &oracle).unwrap();
        }
        assert!(s.duality_gap(&data, &oracle).unwrap() < 1e-8);
    }

    #[test]
    fn fixed_point_step_is_noop() {
        let data = vec![Example { model: chain_model(&[vec![0.0]], 2), label: vec![0] }];
        let oracle = MarginalOracle::default();
        let mut s = SdcaState::init(&data, &SdcaConfig::default()).unwrap();
        // zero features: w = 0, oracle marginals are uniform == mu
        let before = s.mu.clone();
        let info = s.step(&data, 0, &oracle).unwrap();
        assert_eq!(info.gap, 0.0);
        assert_eq!(s.mu, before);
        assert_eq!(s.duality_gap(&data, &oracle).unwrap(), 0.0);
    }

    #[test]
    fn single_node_step_matches_grid_search() {
        let data = vec![Example { model: chain_model(&[vec![1.0, -0.5]], 3), label: vec![2] }];
        let oracle = MarginalOracle::default();
        let mut s = SdcaState::init(&data, &SdcaConfig { lambda: Some(0.7), ..Default::default() }).unwrap();
        let mu0 = s.mu[0].clone();
        let w0 = s.w.clone();
        let nu = oracle.marginals(&data[0].model, &w0).unwrap();
        let objective = |g: f64| {
            let m = mu0.interpolate(&nu, g);
            let w = conjugate_weights(&data, std::slice::from_ref(&m), 0.7).unwrap();
            entropy_marginals(&m).unwrap() - 0.5 * 0.7 * dot(&w, &w)
        };
        let (mut best_g, mut best_v) = (0.0, f64::NEG_INFINITY);
        for k in 0..=10_000 {
            let g = k as f64 * 1e-4;
            let v = objective(g);
            if v > best_v {
                best_v = v;
                best_g = g;
            }
        }
        let info = s.step(&data, 0, &oracle).unwrap();
        assert!((info.gamma - best_g).abs() < 1e-3, "{} vs {}", info.gamma, best_g);
    }

    #[test]
    fn sampling_frequencies() {
        let data = vec![
            Example { model: chain_model(&[vec![1.0]], 2), label: vec![0] };
            4
        ];
        let mut s = SdcaState::init(&data, &SdcaConfig { seed: 2, ..Default::default() }).unwrap();
        s.gaps = vec![0.0, 1.0, 0.0, 0.0];
        let draws = 100_000;
        let hits = (0..draws).filter(|_| s.sample() == 1).count() as f64;
        let p = 0.8 * 0.25 + 0.2;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits / draws as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(SdcaState::init(&[], &SdcaConfig::default()), Err(Error::Config(_))));
    }
}
