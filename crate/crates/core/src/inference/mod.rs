//! Exact chain inference, AD3 MAP for general factor graphs with logic
//! factors, and clique-marginal utilities (entropy, divergence, peaked
//! marginals).

mod ad3;
mod chain;
mod marginals;

pub use ad3::{ad3_map, project_at_most_one, project_simplex, Ad3Config, Ad3TraceRow};
pub use chain::{loss_augmented_map, max_product_chain, sum_product_chain};
pub use marginals::{entropy_marginals, kl_marginals, peaked_marginals, safe_ln, CliqueMarginals, LOG_FLOOR};

use crate::error::Result;
use crate::graph::{FactorGraphModel, Potentials};

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub map_labeling: Vec<usize>,
    /// Potential score of `map_labeling`.
    pub score: f64,
    pub log_partition: Option<f64>,
    pub marginals: Option<CliqueMarginals>,
    /// LP upper bound (AD3 only).
    pub bound: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Exact sum-product plus Viterbi on a chain.
pub fn chain_inference(pot: &Potentials) -> Result<InferenceResult> {
    let (log_z, mu) = sum_product_chain(pot)?;
    let (score, y) = max_product_chain(pot)?;
    Ok(InferenceResult {
        map_labeling: y,
        score,
        log_partition: Some(log_z),
        marginals: Some(mu),
        bound: None,
        converged: true,
        iterations: 1,
    })
}

/// MAP labeling under weights `w`: Viterbi when the model is a plain chain,
/// AD3 otherwise.
pub fn map_inference(model: &FactorGraphModel, w: &[f64], cfg: &Ad3Config) -> Result<InferenceResult> {
    let pot = model.potentials(w);
    if pot.is_chain() && model.logic_factors.is_empty() {
        chain_inference(&pot)
    } else {
        ad3_map(&pot, &model.logic_factors, cfg)
    }
}
