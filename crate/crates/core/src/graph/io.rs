//! JSON serialization of factor graphs:
//! `{dim, topology, nodes:[{labels, unary_features}], edges:[[u,v],...],
//! pairwise:[...], logic_factors:[{kind, members:[[node,label],...]}]}`.

use serde::{Deserialize, Serialize};

use super::{Edge, FactorGraphModel, LogicFactor, Node, PairwiseFeatures, Topology, UnaryFeatures};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnaryRecord {
    /// `dims = [rows, labels]`, `values` row-major.
    Columns { dims: [usize; 2], values: Vec<f64>, offset: usize },
    Kronecker {
        phi: Vec<f64>,
        offset: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub labels: usize,
    pub unary_features: UnaryRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphRecord {
    pub dim: usize,
    pub topology: Topology,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<[usize; 2]>,
    /// Parallel to `edges`; absent means constraint-only edges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairwise: Vec<PairwiseFeatures>,
    #[serde(default)]
    pub logic_factors: Vec<LogicFactor>,
}

impl From<&FactorGraphModel> for GraphRecord {
    fn from(m: &FactorGraphModel) -> Self {
        let nodes = m
            .nodes
            .iter()
            .map(|n| NodeRecord {
                labels: n.labels,
                unary_features: match &n.unary {
                    UnaryFeatures::Columns { rows, values, offset } => {
                        UnaryRecord::Columns { dims: [*rows, n.labels], values: values.clone(), offset: *offset }
                    }
                    UnaryFeatures::Kronecker { phi, offset, classes } => {
                        UnaryRecord::Kronecker { phi: phi.clone(), offset: *offset, classes: classes.clone() }
                    }
                },
                bias: n.bias.clone(),
            })
            .collect();
        let pairwise = if m.edges.iter().all(|e| e.features == PairwiseFeatures::None) {
            Vec::new()
        } else {
            m.edges.iter().map(|e| e.features.clone()).collect()
        };
        Self {
            dim: m.dim,
            topology: m.topology,
            nodes,
            edges: m.edges.iter().map(|e| [e.u, e.v]).collect(),
            pairwise,
            logic_factors: m.logic_factors.clone(),
        }
    }
}

impl GraphRecord {
    pub fn into_model(self) -> Result<FactorGraphModel> {
        if !self.pairwise.is_empty() && self.pairwise.len() != self.edges.len() {
            return Err(Error::Contract("pairwise list must parallel edges".into()));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.into_iter().enumerate() {
            let unary = match n.unary_features {
                UnaryRecord::Columns { dims, values, offset } => {
                    if dims[1] != n.labels {
                        return Err(Error::Contract(format!("node {i}: dims disagree with label count")));
                    }
                    UnaryFeatures::Columns { rows: dims[0], values, offset }
                }
                UnaryRecord::Kronecker { phi, offset, classes } => UnaryFeatures::Kronecker { phi, offset, classes },
            };
            nodes.push(Node { labels: n.labels, unary, bias: n.bias });
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, &[u, v])| Edge {
                u,
                v,
                features: self.pairwise.get(k).cloned().unwrap_or(PairwiseFeatures::None),
            })
            .collect();
        let m = FactorGraphModel { dim: self.dim, nodes, edges, logic_factors: self.logic_factors, topology: self.topology };
        m.validate()?;
        Ok(m)
    }
}

impl FactorGraphModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GraphRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<GraphRecord>(s)?.into_model()
    }
}
