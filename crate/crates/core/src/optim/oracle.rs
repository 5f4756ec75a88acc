use crate::error::{Error, Result};
use crate::graph::{is_neg_inf, FactorGraphModel};
use crate::inference::{ad3_map, peaked_marginals, sum_product_chain, Ad3Config, CliqueMarginals};

/// Marginalization oracle: exact forward-backward on plain chains, AD3 MAP
/// smoothed into peaked marginals everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalOracle {
    pub ad3: Ad3Config,
    pub epsilon: f64,
}

impl Default for MarginalOracle {
    fn default() -> Self {
        Self { ad3: Ad3Config::default(), epsilon: 1e-6 }
    }
}

fn allowed(model: &FactorGraphModel) -> Vec<Vec<bool>> {
    model
        .nodes
        .iter()
        .map(|n| (0..n.labels).map(|l| n.bias.as_ref().is_none_or(|b| !is_neg_inf(b[l]))).collect())
        .collect()
}

fn product_edges(nodes: Vec<Vec<f64>>, pairs: Vec<(usize, usize)>) -> CliqueMarginals {
    let edges = pairs
        .iter()
        .map(|&(u, v)| nodes[u].iter().flat_map(|a| nodes[v].iter().map(move |b| a * b)).collect())
        .collect();
    CliqueMarginals { nodes, pairs, edges }
}

/// Uniform over each node's unmasked labels, edges as products.
pub fn feasible_uniform(model: &FactorGraphModel) -> CliqueMarginals {
    let nodes = allowed(model)
        .into_iter()
        .map(|ok| {
            let k = ok.iter().filter(|&&b| b).count().max(1) as f64;
            ok.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect()
        })
        .collect();
    product_edges(nodes, model.edge_list())
}

/// Peaked marginals whose smoothing mass avoids masked labels.
pub fn peaked_for_model(model: &FactorGraphModel, y: &[usize], epsilon: f64) -> Result<CliqueMarginals> {
    let ok = allowed(model);
    if ok.iter().all(|row| row.iter().all(|&b| b)) {
        return peaked_marginals(y, &model.sizes(), &model.edge_list(), epsilon);
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("peaked marginals need 0 < epsilon < 1, got {epsilon}")));
    }
    let nodes = ok
        .iter()
        .zip(y)
        .map(|(row, &l)| {
            let others = row.iter().enumerate().filter(|&(k, &b)| b && k != l).count();
            if others == 0 {
                let mut v = vec![0.0; row.len()];
                v[l] = 1.0;
                return v;
            }
            let rest = epsilon / others as f64;
            row.iter()
                .enumerate()
                .map(|(k, &b)| if k == l { 1.0 - epsilon } else if b { rest } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(product_edges(nodes, model.edge_list()))
}

impl MarginalOracle {
    pub fn marginals(&self, model: &FactorGraphModel, w: &[f64]) -> Result<CliqueMarginals> {
        let pot = model.potentials(w);
        if pot.is_chain() && model.logic_factors.is_empty() {
            Ok(sum_product_chain(&pot)?.1)
        } else {
            let r = ad3_map(&pot, &model.logic_factors, &self.ad3)?;
            peaked_for_model(model, &r.map_labeling, self.epsilon)
        }
    }
}
