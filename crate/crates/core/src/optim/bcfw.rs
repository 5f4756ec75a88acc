use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{absorb, dot, Example, FactorGraphModel};
use crate::inference::{ad3_map, loss_augmented_map, Ad3Config, CliqueMarginals};
use crate::rng::{rng_from, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct BcfwConfig {
    /// Defaults to `1/n`.
    pub lambda: Option<f64>,
    pub seed: u64,
    /// Per-position Hamming loss weight.
    pub loss_weight: f64,
    pub averaging: bool,
    pub ad3: Ad3Config,
}

impl Default for BcfwConfig {
    fn default() -> Self {
        Self { lambda: None, seed: 0, loss_weight: 1.0, averaging: false, ad3: Ad3Config::default() }
    }
}

pub fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// BCFW state. Each block `w_i = (1/(lambda n)) (F(y_i) - E_{q_i} F)` is
/// kept implicitly through the mixture marginals `q_i` over visited
/// labelings, so memory scales with the clique tables rather than with
/// `n * dim`.
#[derive(Clone, Debug)]
pub struct BcfwState {
    pub w: Vec<f64>,
    pub q: Vec<CliqueMarginals>,
    pub losses: Vec<f64>,
    pub w_avg: Option<Vec<f64>>,
    pub lambda: f64,
    pub step_count: u64,
    loss_weight: f64,
    ad3: Ad3Config,
    rng: Rng,
}

fn mixture_loss(q: &CliqueMarginals, y_true: &[usize], weight: f64) -> f64 {
    weight * q.nodes.iter().zip(y_true).map(|(p, &l)| 1.0 - p[l]).sum::<f64>()
}

impl BcfwState {
    pub fn init(data: &[Example], cfg: &BcfwConfig) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::Config("empty dataset".into()))?;
        let dim = first.model.dim;
        if data.iter().any(|ex| ex.model.dim != dim) {
            return Err(Error::Config("examples disagree on the feature dimension".into()));
        }
        let n = data.len();
        let lambda = cfg.lambda.unwrap_or(1.0 / n as f64);
        if !(lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        let q = data
            .iter()
            .map(|ex| CliqueMarginals::indicator(&ex.model.sizes(), &ex.model.edge_list(), &ex.label))
            .collect();
        Ok(Self {
            w: vec![0.0; dim],
            q,
            losses: vec![0.0; n],
            w_avg: cfg.averaging.then(|| vec![0.0; dim]),
            lambda,
            step_count: 0,
            loss_weight: cfg.loss_weight,
            ad3: cfg.ad3.clone(),
            rng: rng_from(cfg.seed),
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `argmax_y  loss(y_i, y) + <w, F(x_i, y)>`
    pub fn loss_augmented(&self, model: &FactorGraphModel, y_true: &[usize], w: &[f64]) -> Result<Vec<usize>> {
        let pot = model.potentials(w);
        if pot.is_chain() && model.logic_factors.is_empty() {
            return Ok(loss_augmented_map(&pot, y_true, self.loss_weight)?.1);
        }
        let mut aug = pot;
        for (t, u) in aug.unary.iter_mut().enumerate() {
            for (l, v) in u.iter_mut().enumerate() {
                if l != y_true[t] {
                    *v = absorb(*v + self.loss_weight);
                }
            }
        }
        Ok(ad3_map(&aug, &model.logic_factors, &self.ad3)?.map_labeling)
    }

    /// One block step on example `i`; returns the step size.
    pub fn step(&mut self, data: &[Example], i: usize) -> Result<f64> {
        let ex = &data[i];
        let n = self.n() as f64;
        let scale = 1.0 / (self.lambda * n);
        let y_star = self.loss_augmented(&ex.model, &ex.label, &self.w)?;
        let sizes = ex.model.sizes();
        let pairs = ex.model.edge_list();
        let atom = CliqueMarginals::indicator(&sizes, &pairs, &y_star);
        // d = w_s - w_i
        let mut d = vec![0.0; self.w.len()];
        ex.model.add_expected_features(&self.q[i], scale, &mut d);
        ex.model.add_features(&y_star, -scale, &mut d);
        let loss_s = self.loss_weight * hamming(&y_star, &ex.label) as f64 / n;
        let dd = dot(&d, &d);
        let gamma = if dd > 0.0 {
            ((-self.lambda * dot(&d, &self.w) - self.losses[i] + loss_s) / (self.lambda * dd)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if gamma > 0.0 {
            self.q[i] = self.q[i].interpolate(&atom, gamma);
            self.losses[i] = mixture_loss(&self.q[i], &ex.label, self.loss_weight) / n;
            for (w, x) in self.w.iter_mut().zip(&d) {
                *w += gamma * x;
            }
        }
        self.step_count += 1;
        if let Some(avg) = &mut self.w_avg {
            let k = self.step_count as f64;
            for (a, w) in avg.iter_mut().zip(&self.w) {
                *a += (w - *a) / k;
            }
        }
        Ok(gamma)
    }

    /// `n` uniformly sampled block steps.
    pub fn epoch(&mut self, data: &[Example]) -> Result<()> {
        for _ in 0..self.n() {
            let i = self.rng.gen_range(0..self.n());
            self.step(data, i)?;
        }
        Ok(())
    }

    /// Weights used for prediction: the running average when enabled.
    pub fn weights(&self) -> &[f64] {
        self.w_avg.as_deref().unwrap_or(&self.w)
    }

    /// `sum_i l_i - (lambda/2) |w|^2`
    pub fn dual_objective(&self) -> f64 {
        self.losses.iter().sum::<f64>() - 0.5 * self.lambda * dot(&self.w, &self.w)
    }

    /// Structured hinge primal `(lambda/2)|w|^2 + (1/n) sum_i max_y [loss + <w, F(y) - F(y_i)>]`.
    pub fn primal_objective(&self, data: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            let y = self.loss_augmented(&ex.model, &ex.label, &self.w)?;
            let s = ex.model.score_labeling(&self.w, &y)? - ex.model.score_labeling(&self.w, &ex.label)?;
            total += self.loss_weight * hamming(&y, &ex.label) as f64 + s;
        }
        Ok(0.5 * self.lambda * dot(&self.w, &self.w) + total / self.n() as f64)
    }

    /// Recompute `w = sum_i w_i` from the mixtures.
    pub fn recompute_weights(&self, data: &[Example]) -> Vec<f64> {
        let scale = 1.0 / (self.lambda * self.n() as f64);
        let mut w = vec![0.0; self.w.len()];
        for (ex, q) in data.iter().zip(&self.q) {
            ex.model.add_features(&ex.label, scale, &mut w);
            ex.model.add_expected_features(q, -scale, &mut w);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::chain_model;

    fn toy() -> Vec<Example> {
        vec![
            Example { model: chain_model(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2), label: vec![0, 1] },
            Example { model: chain_model(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]], 2), label: vec![1, 1, 0] },
        ]
    }

    #[test]
    fn blocks_sum_to_weights_and_gap_closes() {
        let data = toy();
        let mut s = BcfwState::init(&data, &BcfwConfig::default()).unwrap();
        for _ in 0..200 {
            s.epoch(&data).unwrap();
            let w = s.recompute_weights(&data);
            assert!(w.iter().zip(&s.w).all(|(a, b)| (a - b).abs() < 1e-8));
        }
        let gap = s.primal_objective(&data).unwrap() - s.dual_objective();
        assert!((-1e-9..1e-2).contains(&gap), "gap {gap}");
    }

    #[test]
    fn hand_computed_single_step() {
        // one node, two labels, phi = [1]; y_true = 0, lambda = 1
        let data = vec![Example { model: chain_model(&[vec![1.0]], 2), label: vec![0] }];
        let mut s = BcfwState::init(&data, &BcfwConfig { lambda: Some(1.0), ..Default::default() }).unwrap();
        let g = s.step(&data, 0).unwrap();
        // w = 0: loss-augmented argmax is label 1; d = F(0) - F(1) = (1, -1)
        // gamma = (0 - 0 + 1) / (1 * 2) = 0.5
        assert!((g - 0.5).abs() < 1e-12);
        assert_eq!(s.w[..2], [0.5, -0.5]);
        assert!((s.losses[0] - 0.5).abs() < 1e-12);
        // now label 0 wins the augmented score (0.5 vs -0.5 + 1), tie -> lowest index
        let g2 = s.step(&data, 0).unwrap();
        assert!((0.0..=1.0).contains(&g2));
    }

    #[test]
    fn true_label_atom_never_lowers_dual() {
        let data = vec![Example { model: chain_model(&[vec![1.0]], 2), label: vec![0] }];
        let mut s = BcfwState::init(&data, &BcfwConfig { lambda: Some(1.0), loss_weight: 0.0, ..Default::default() }).unwrap();
        let before = s.dual_objective();
        let g = s.step(&data, 0).unwrap();
        assert_eq!(g, 0.0);
        assert!(s.dual_objective() >= before);
    }
}
