//! Factor-graph CRF models: label spaces, joint feature maps decomposed over
//! nodes and edges, hard logic factors, potential tables, and likelihood
//! quantities.

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{sum_product_chain, CliqueMarginals};

/// Score given to labelings that violate a hard factor. Absorbing under
/// addition of finite scores.
pub const NEG_INF: f64 = -1e30;

/// Anything at or below this is treated as the sentinel.
pub const NEG_INF_THRESHOLD: f64 = -1e29;

#[inline]
pub fn is_neg_inf(v: f64) -> bool {
    v <= NEG_INF_THRESHOLD
}

/// Clamp a sum back to the sentinel when any term was the sentinel.
#[inline]
pub fn absorb(v: f64) -> f64 {
    if is_neg_inf(v) {
        NEG_INF
    } else {
        v
    }
}

/// How a node's label selects its slice of the joint feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnaryFeatures {
    /// Shared per-class weight blocks: label `l` contributes `phi` at
    /// `offset + class(l) * phi.len()`. `classes` maps labels to weight
    /// blocks (identity when absent).
    Kronecker {
        phi: Vec<f64>,
        offset: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<usize>>,
    },
    /// One column of `rows` features per label, all sharing the weight block
    /// at `offset` (`values` is row-major `rows x labels`).
    Columns { rows: usize, values: Vec<f64>, offset: usize },
}

/// A node: label count, unary features, and optional fixed log-potentials
/// (used for masks; entries may be [`NEG_INF`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub labels: usize,
    pub unary: UnaryFeatures,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

/// Pairwise feature construction on an edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairwiseFeatures {
    /// Constraint-only edge: no learned pairwise score.
    None,
    /// Shared transition table: `(a, b)` fires weight `offset + a * stride + b`.
    Transition { offset: usize, stride: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub features: PairwiseFeatures,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicKind {
    AtMostOne,
    ExactlyOne,
}

/// Hard factor over `(node, label)` indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicFactor {
    pub kind: LogicKind,
    pub members: Vec<(usize, usize)>,
}

impl LogicFactor {
    pub fn active_count(&self, y: &[usize]) -> usize {
        self.members.iter().filter(|&&(n, l)| y[n] == l).count()
    }

    pub fn satisfied(&self, y: &[usize]) -> bool {
        let k = self.active_count(y);
        match self.kind {
            LogicKind::AtMostOne => k <= 1,
            LogicKind::ExactlyOne => k == 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Chain,
    Tree,
    General,
}

/// A CRF instance: nodes with label spaces and features, edges, and hard
/// logic factors. `dim` is the length of the joint feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorGraphModel {
    pub dim: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub logic_factors: Vec<LogicFactor>,
    pub topology: Topology,
}

/// Per-node and per-edge log-potential tables for fixed weights. Edge tables
/// are row-major `labels(u) x labels(v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potentials {
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub pairwise: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn n_nodes(&self) -> usize {
        self.unary.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.unary.iter().map(Vec::len).collect()
    }

    /// Sum of table lookups for a labeling (sentinel-absorbing).
    pub fn score(&self, y: &[usize]) -> f64 {
        let mut s = 0.0;
        for (v, t) in self.unary.iter().enumerate() {
            s += t[y[v]];
        }
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let mv = self.unary[v].len();
            s += self.pairwise[e][y[u] * mv + y[v]];
        }
        absorb(s)
    }

    /// True when the edges form the path `0-1-2-...` in order.
    pub fn is_chain(&self) -> bool {
        let n = self.unary.len();
        n > 0 && self.edges.len() == n - 1 && self.edges.iter().enumerate().all(|(i, &(u, v))| u == i && v == i + 1)
    }
}

impl Node {
    pub fn feature_len(&self) -> usize {
        match &self.unary {
            UnaryFeatures::Kronecker { phi, .. } => phi.len(),
            UnaryFeatures::Columns { rows, .. } => *rows,
        }
    }

    /// The shared feature vector of a Kronecker node (empty otherwise).
    pub fn kronecker_phi(&self) -> &[f64] {
        match &self.unary {
            UnaryFeatures::Kronecker { phi, .. } => phi,
            UnaryFeatures::Columns { .. } => &[],
        }
    }

    fn class_of(&self, label: usize) -> usize {
        match &self.unary {
            UnaryFeatures::Kronecker { classes: Some(c), .. } => c[label],
            _ => label,
        }
    }

    /// `<w, F_v(label)>`
    pub fn unary_score(&self, w: &[f64], label: usize) -> f64 {
        let mut s = match &self.unary {
            UnaryFeatures::Kronecker { phi, offset, .. } => {
                let start = offset + self.class_of(label) * phi.len();
                dot(&w[start..start + phi.len()], phi)
            }
            UnaryFeatures::Columns { rows, values, offset } => {
                let mut s = 0.0;
                for r in 0..*rows {
                    s += w[offset + r] * values[r * self.labels + label];
                }
                s
            }
        };
        if let Some(b) = &self.bias {
            s += b[label];
        }
        s
    }

    /// `out += scale * F_v(label)`
    pub fn add_features(&self, label: usize, scale: f64, out: &mut [f64]) {
        match &self.unary {
            UnaryFeatures::Kronecker { phi, offset, .. } => {
                let start = offset + self.class_of(label) * phi.len();
                for (o, p) in out[start..start + phi.len()].iter_mut().zip(phi) {
                    *o += scale * p;
                }
            }
            UnaryFeatures::Columns { rows, values, offset } => {
                for r in 0..*rows {
                    out[offset + r] += scale * values[r * self.labels + label];
                }
            }
        }
    }

    /// `out += scale * sum_l probs[l] F_v(l)`
    pub fn add_expected_features(&self, probs: &[f64], scale: f64, out: &mut [f64]) {
        match &self.unary {
            UnaryFeatures::Kronecker { phi, offset, .. } => {
                for (l, &p) in probs.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let start = offset + self.class_of(l) * phi.len();
                    let c = scale * p;
                    for (o, f) in out[start..start + phi.len()].iter_mut().zip(phi) {
                        *o += c * f;
                    }
                }
            }
            UnaryFeatures::Columns { rows, values, offset } => {
                for r in 0..*rows {
                    let row = &values[r * self.labels..(r + 1) * self.labels];
                    out[offset + r] += scale * dot(row, probs);
                }
            }
        }
    }

    /// Gradient of `sum_l coef[l] <w, F_v(l)>` with respect to the node's
    /// raw input features (`phi` or the column matrix), given weights `w`.
    pub fn feature_gradient(&self, w: &[f64], coef: &[f64]) -> Vec<f64> {
        match &self.unary {
            UnaryFeatures::Kronecker { phi, offset, .. } => {
                let d = phi.len();
                let mut g = vec![0.0; d];
                for (l, &c) in coef.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let start = offset + self.class_of(l) * d;
                    for (gi, wi) in g.iter_mut().zip(&w[start..start + d]) {
                        *gi += c * wi;
                    }
                }
                g
            }
            UnaryFeatures::Columns { rows, offset, .. } => {
                let mut g = vec![0.0; rows * self.labels];
                for r in 0..*rows {
                    for (l, &c) in coef.iter().enumerate() {
                        g[r * self.labels + l] = c * w[offset + r];
                    }
                }
                g
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FactorGraphModel {
    /// Validate references and the chain tag.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.labels == 0 {
                return Err(Error::Contract(format!("node {i} has an empty label space")));
            }
            let end = match &node.unary {
                UnaryFeatures::Kronecker { phi, offset, classes } => {
                    let max_class = match classes {
                        Some(c) => {
                            if c.len() != node.labels {
                                return Err(Error::Contract(format!("node {i}: class map length mismatch")));
                            }
                            c.iter().copied().max().unwrap_or(0)
                        }
                        None => node.labels - 1,
                    };
                    offset + (max_class + 1) * phi.len()
                }
                UnaryFeatures::Columns { rows, values, offset } => {
                    if values.len() != rows * node.labels {
                        return Err(Error::Contract(format!("node {i}: column matrix size mismatch")));
                    }
                    offset + rows
                }
            };
            if end > self.dim {
                return Err(Error::Contract(format!("node {i} features exceed the joint dimension")));
            }
            if let Some(b) = &node.bias {
                if b.len() != node.labels {
                    return Err(Error::Contract(format!("node {i}: bias length mismatch")));
                }
            }
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.u >= n || e.v >= n || e.u == e.v {
                return Err(Error::Contract(format!("edge {k} references invalid nodes")));
            }
            if let PairwiseFeatures::Transition { offset, stride } = e.features {
                let (mu, mv) = (self.nodes[e.u].labels, self.nodes[e.v].labels);
                if stride < mv || offset + (mu - 1) * stride + mv > self.dim {
                    return Err(Error::Contract(format!("edge {k} transition table out of range")));
                }
            }
        }
        for (k, f) in self.logic_factors.iter().enumerate() {
            for &(node, label) in &f.members {
                if node >= n || label >= self.nodes[node].labels {
                    return Err(Error::Contract(format!("logic factor {k} references invalid (node, label)")));
                }
            }
        }
        if self.topology == Topology::Chain {
            let ok = self.edges.len() + 1 == n.max(1)
                && self.edges.iter().enumerate().all(|(i, e)| e.u == i && e.v == i + 1);
            if !ok {
                return Err(Error::Contract("chain-tagged model whose edges are not a path".into()));
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.labels).collect()
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.u, e.v)).collect()
    }

    fn check_labeling(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.nodes.len() {
            return Err(Error::Contract(format!(
                "labeling has {} entries for {} nodes",
                y.len(),
                self.nodes.len()
            )));
        }
        for (i, (&l, node)) in y.iter().zip(&self.nodes).enumerate() {
            if l >= node.labels {
                return Err(Error::Contract(format!("label {l} out of range at node {i}")));
            }
        }
        Ok(())
    }

    pub fn feasible(&self, y: &[usize]) -> bool {
        self.logic_factors.iter().all(|f| f.satisfied(y))
            && self
                .nodes
                .iter()
                .zip(y)
                .all(|(n, &l)| n.bias.as_ref().is_none_or(|b| !is_neg_inf(b[l])))
    }

    /// `<w, F(x, y)>`, or [`NEG_INF`] if `y` violates a hard factor.
    pub fn score_labeling(&self, w: &[f64], y: &[usize]) -> Result<f64> {
        self.check_labeling(y)?;
        if !self.logic_factors.iter().all(|f| f.satisfied(y)) {
            return Ok(NEG_INF);
        }
        let mut s = 0.0;
        for (node, &l) in self.nodes.iter().zip(y) {
            s += node.unary_score(w, l);
        }
        for e in &self.edges {
            if let PairwiseFeatures::Transition { offset, stride } = e.features {
                s += w[offset + y[e.u] * stride + y[e.v]];
            }
        }
        Ok(absorb(s))
    }

    /// Precompute `<w, features>` per label and per edge assignment.
    pub fn potentials(&self, w: &[f64]) -> Potentials {
        let unary = self
            .nodes
            .iter()
            .map(|n| (0..n.labels).map(|l| absorb(n.unary_score(w, l))).collect())
            .collect();
        let pairwise = self
            .edges
            .iter()
            .map(|e| {
                let (mu, mv) = (self.nodes[e.u].labels, self.nodes[e.v].labels);
                match e.features {
                    PairwiseFeatures::None => vec![0.0; mu * mv],
                    PairwiseFeatures::Transition { offset, stride } => {
                        let mut t = Vec::with_capacity(mu * mv);
                        for a in 0..mu {
                            t.extend_from_slice(&w[offset + a * stride..offset + a * stride + mv]);
                        }
                        t
                    }
                }
            })
            .collect();
        Potentials { unary, edges: self.edge_list(), pairwise }
    }

    /// `out += scale * F(x, y)`
    pub fn add_features(&self, y: &[usize], scale: f64, out: &mut [f64]) {
        for (node, &l) in self.nodes.iter().zip(y) {
            node.add_features(l, scale, out);
        }
        for e in &self.edges {
            if let PairwiseFeatures::Transition { offset, stride } = e.features {
                out[offset + y[e.u] * stride + y[e.v]] += scale;
            }
        }
    }

    /// Dense joint feature vector `F(x, y)`.
    pub fn features(&self, y: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_features(y, 1.0, &mut out);
        out
    }

    /// `out += scale * E_mu[F(x, .)]` using node and edge marginals.
    pub fn add_expected_features(&self, mu: &CliqueMarginals, scale: f64, out: &mut [f64]) {
        for (node, probs) in self.nodes.iter().zip(&mu.nodes) {
            node.add_expected_features(probs, scale, out);
        }
        for (e, table) in self.edges.iter().zip(&mu.edges) {
            if let PairwiseFeatures::Transition { offset, stride } = e.features {
                let mv = self.nodes[e.v].labels;
                for (k, &p) in table.iter().enumerate() {
                    out[offset + (k / mv) * stride + k % mv] += scale * p;
                }
            }
        }
    }

    /// `-log p(y_true | x; w)` for chain models.
    pub fn neg_log_likelihood(&self, w: &[f64], y_true: &[usize]) -> Result<f64> {
        let score = self.score_labeling(w, y_true)?;
        if is_neg_inf(score) || !self.feasible(y_true) {
            return Err(Error::Contract("true labeling is infeasible".into()));
        }
        let pot = self.potentials(w);
        let (log_z, _) = sum_product_chain(&pot)?;
        let nll = log_z - score;
        debug_assert!(nll >= -1e-9, "negative NLL {nll}");
        Ok(nll.max(0.0))
    }
}

/// A labeled structured example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub model: FactorGraphModel,
    pub label: Vec<usize>,
}

/// `P(w) = lambda/2 |w|^2 + (1/n) sum_i -log p(y_i | x_i; w)`.
pub fn primal_objective(w: &[f64], data: &[Example], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Config("lambda must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut loss = 0.0;
    for ex in data {
        loss += ex.model.neg_log_likelihood(w, &ex.label)?;
    }
    Ok(0.5 * lambda * dot(w, w) + loss / data.len() as f64)
}

/// Chain CRF over `labels` classes with Kronecker unary features
/// (`phis[t]` per position) and a shared transition table.
/// Weight layout: `[labels * d unary | labels * labels transitions]`.
pub fn chain_model(phis: &[Vec<f64>], labels: usize) -> FactorGraphModel {
    let d = phis.first().map_or(0, Vec::len);
    let trans = labels * d;
    let nodes = phis
        .iter()
        .map(|phi| Node {
            labels,
            unary: UnaryFeatures::Kronecker { phi: phi.clone(), offset: 0, classes: None },
            bias: None,
        })
        .collect::<Vec<_>>();
    let edges = (1..phis.len())
        .map(|i| Edge { u: i - 1, v: i, features: PairwiseFeatures::Transition { offset: trans, stride: labels } })
        .collect();
    FactorGraphModel { dim: trans + labels * labels, nodes, edges, logic_factors: Vec::new(), topology: Topology::Chain }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn random_chain(n: usize, labels: usize, d: usize, seed: u64) -> (FactorGraphModel, Vec<f64>) {
        let mut rng = rng_from(seed);
        let phis: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let m = chain_model(&phis, labels);
        let w = (0..m.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (m, w)
    }

    fn all_labelings(sizes: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &m in sizes {
            out = out
                .into_iter()
                .flat_map(|p| (0..m).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                }))
                .collect();
        }
        out
    }

    // independent scorer: materialize F(x, y) by hand from the chain layout
    fn naive_score(phis: &[Vec<f64>], labels: usize, w: &[f64], y: &[usize]) -> f64 {
        let d = phis[0].len();
        let mut s = 0.0;
        for (t, phi) in phis.iter().enumerate() {
            for k in 0..d {
                s += w[y[t] * d + k] * phi[k];
            }
        }
        for t in 1..y.len() {
            s += w[labels * d + y[t - 1] * labels + y[t]];
        }
        s
    }

    #[test]
    fn zero_weights_score_zero() {
        let (m, _) = random_chain(3, 3, 4, 1);
        let w = vec![0.0; m.dim];
        assert_eq!(m.score_labeling(&w, &[0, 2, 1]).unwrap(), 0.0);
    }

    #[test]
    fn identity_columns_score_is_weight() {
        let node = Node {
            labels: 3,
            unary: UnaryFeatures::Columns { rows: 3, values: vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], offset: 0 },
            bias: None,
        };
        let m = FactorGraphModel { dim: 3, nodes: vec![node], edges: vec![], logic_factors: vec![], topology: Topology::Chain };
        m.validate().unwrap();
        let w = [0.5, -2.0, 3.0];
        for l in 0..3 {
            assert_eq!(m.score_labeling(&w, &[l]).unwrap(), w[l]);
        }
    }

    #[test]
    fn score_matches_independent_scorer() {
        let mut rng = rng_from(5);
        let phis: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let m = chain_model(&phis, 3);
        let w: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for y in all_labelings(&[3, 3, 3, 3]) {
            let a = m.score_labeling(&w, &y).unwrap();
            let b = naive_score(&phis, 3, &w, &y);
            assert!((a - b).abs() < 1e-12);
            // F(x,y) route agrees too
            assert!((dot(&m.features(&y), &w) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_label_is_contract_error() {
        let (m, w) = random_chain(2, 2, 2, 0);
        assert!(matches!(m.score_labeling(&w, &[0, 2]), Err(Error::Contract(_))));
    }

    #[test]
    fn potentials_zero_linear_and_consistent() {
        let (m, w) = random_chain(3, 3, 2, 8);
        let zero = m.potentials(&vec![0.0; m.dim]);
        assert!(zero.unary.iter().flatten().chain(zero.pairwise.iter().flatten()).all(|&v| v == 0.0));
        let p1 = m.potentials(&w);
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let p2 = m.potentials(&w2);
        for (a, b) in p1.unary.iter().flatten().zip(p2.unary.iter().flatten()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        for (a, b) in p1.pairwise.iter().flatten().zip(p2.pairwise.iter().flatten()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        for y in all_labelings(&m.sizes()) {
            assert!((p1.score(&y) - m.score_labeling(&w, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn logic_violation_scores_sentinel() {
        let (mut m, w) = random_chain(2, 2, 2, 3);
        m.logic_factors.push(LogicFactor { kind: LogicKind::AtMostOne, members: vec![(0, 1), (1, 1)] });
        assert_eq!(m.score_labeling(&w, &[1, 1]).unwrap(), NEG_INF);
        assert!(m.score_labeling(&w, &[1, 0]).unwrap() > NEG_INF);
    }

    #[test]
    fn nll_uniform_and_enumeration() {
        let node = Node { labels: 5, unary: UnaryFeatures::Kronecker { phi: vec![1.0], offset: 0, classes: None }, bias: None };
        let m = FactorGraphModel { dim: 5, nodes: vec![node], edges: vec![], logic_factors: vec![], topology: Topology::Chain };
        assert!((m.neg_log_likelihood(&[0.0; 5], &[3]).unwrap() - 5f64.ln()).abs() < 1e-12);

        let (m, w) = random_chain(2, 2, 3, 17);
        let ys = all_labelings(&[2, 2]);
        let z: f64 = ys.iter().map(|y| naive_score_model(&m, &w, y).exp()).sum();
        for y in &ys {
            let expect = -(naive_score_model(&m, &w, y).exp() / z).ln();
            assert!((m.neg_log_likelihood(&w, y).unwrap() - expect).abs() < 1e-10);
        }
    }

    fn naive_score_model(m: &FactorGraphModel, w: &[f64], y: &[usize]) -> f64 {
        dot(&m.features(y), w)
    }

    #[test]
    fn nll_shift_invariance() {
        let (mut m, w) = random_chain(3, 3, 2, 21);
        let before = m.neg_log_likelihood(&w, &[0, 1, 2]).unwrap();
        m.nodes[1].bias = Some(vec![4.2; 3]);
        let after = m.neg_log_likelihood(&w, &[0, 1, 2]).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn primal_at_zero_and_convexity() {
        let mut rng = rng_from(2);
        let data: Vec<Example> = (0..3)
            .map(|i| {
                let (m, _) = random_chain(2 + i, 3, 2, 40 + i as u64);
                let label = (0..m.n_nodes()).map(|_| rng.gen_range(0..3)).collect();
                Example { model: m, label }
            })
            .collect();
        let dim = data[0].model.dim;
        let p0 = primal_objective(&vec![0.0; dim], &data, 0.1).unwrap();
        let expect: f64 = data.iter().map(|e| e.model.n_nodes() as f64 * 3f64.ln()).sum::<f64>() / 3.0;
        assert!((p0 - expect).abs() < 1e-12);
        for _ in 0..20 {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let pa = primal_objective(&a, &data, 0.1).unwrap();
            let pb = primal_objective(&b, &data, 0.1).unwrap();
            let pm = primal_objective(&mid, &data, 0.1).unwrap();
            assert!(pm <= 0.5 * (pa + pb) + 1e-9);
        }
    }

    #[test]
    fn primal_single_example_hand_expansion() {
        // one node, two labels, phi = [1], lambda = 1:
        // P(w) = |w|^2/2 + log(e^{w0} + e^{w1}) - w_y
        let node = Node { labels: 2, unary: UnaryFeatures::Kronecker { phi: vec![1.0], offset: 0, classes: None }, bias: None };
        let m = FactorGraphModel { dim: 2, nodes: vec![node], edges: vec![], logic_factors: vec![], topology: Topology::Chain };
        let data = vec![Example { model: m, label: vec![1] }];
        let w = [0.3, -0.7];
        let expect = 0.5 * (0.09 + 0.49) + (0.3f64.exp() + (-0.7f64).exp()).ln() + 0.7;
        assert!((primal_objective(&w, &data, 1.0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn expected_features_match_enumeration() {
        let (m, w) = random_chain(3, 2, 2, 77);
        let pot = m.potentials(&w);
        let (log_z, mu) = sum_product_chain(&pot).unwrap();
        let mut got = vec![0.0; m.dim];
        m.add_expected_features(&mu, 1.0, &mut got);
        let mut expect = vec![0.0; m.dim];
        for y in all_labelings(&m.sizes()) {
            let p = (pot.score(&y) - log_z).exp();
            m.add_features(&y, p, &mut expect);
        }
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
