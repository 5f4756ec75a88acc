use serde::{Deserialize, Serialize};

use super::embedding::{CategoricalMap, Embedding};
use super::scaler::Scaler;
use crate::ckn::io::CknRecord;
use crate::ckn::{ckn_features, CknModel, FeatureMap};
use crate::error::{Error, Result};
use crate::graph::{Edge, FactorGraphModel, LogicFactor, Node, PairwiseFeatures, Topology, UnaryFeatures};
use crate::inference::{map_inference, sum_product_chain, Ad3Config};
use crate::optim::peaked_for_model;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Raw input of one node: an image-like map, or categorical columns that go
/// through the embedding first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeInput {
    Map(FeatureMap),
    Categorical(CategoricalMap),
}

/// CRF skeleton filled in with per-node feature vectors. Node `t`, label `l`
/// scores against weight block `class(t, l)`; chains may add a shared
/// `n_classes x n_classes` transition table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub sizes: Vec<usize>,
    pub n_classes: usize,
    #[serde(default)]
    pub classes: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub transitions: bool,
    #[serde(default)]
    pub logic: Vec<LogicFactor>,
}

impl Template {
    pub fn chain(len: usize, labels: usize) -> Self {
        Self { sizes: vec![labels; len], n_classes: labels, classes: None, transitions: true, logic: Vec::new() }
    }

    pub fn dim(&self, feature_dim: usize) -> usize {
        self.n_classes * feature_dim + if self.transitions { self.n_classes * self.n_classes } else { 0 }
    }

    pub fn instantiate(&self, phis: Vec<Vec<f64>>) -> Result<FactorGraphModel> {
        if phis.len() != self.sizes.len() {
            return Err(Error::Dimension(format!("{} feature vectors for {} nodes", phis.len(), self.sizes.len())));
        }
        let d = phis.first().map_or(0, Vec::len);
        let nodes = phis
            .into_iter()
            .enumerate()
            .map(|(t, phi)| Node {
                labels: self.sizes[t],
                unary: UnaryFeatures::Kronecker {
                    phi,
                    offset: 0,
                    classes: self.classes.as_ref().map(|c| c[t].clone()),
                },
                bias: None,
            })
            .collect::<Vec<_>>();
        let (edges, topology) = if self.transitions {
            let edges = (1..nodes.len())
                .map(|t| Edge {
                    u: t - 1,
                    v: t,
                    features: PairwiseFeatures::Transition { offset: self.n_classes * d, stride: self.n_classes },
                })
                .collect();
            (edges, Topology::Chain)
        } else {
            (Vec::new(), Topology::General)
        };
        let m = FactorGraphModel { dim: self.dim(d), nodes, edges, logic_factors: self.logic.clone(), topology };
        m.validate()?;
        Ok(m)
    }
}

/// Per-node targets of the auxiliary binary heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxTargets {
    /// Hand-crafted per-node features appended to the CKN features.
    pub own: Vec<Vec<f64>>,
    pub begin: Vec<bool>,
    /// `None` where the target is undefined.
    pub layover: Vec<Option<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructExample {
    pub inputs: Vec<NodeInput>,
    pub template: Template,
    pub label: Vec<usize>,
    #[serde(default)]
    pub aux: Option<AuxTargets>,
}

/// Logistic heads over `[phi ; own ; 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxHeads {
    pub begin: Vec<f64>,
    pub layover: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn head_input(phi: &[f64], own: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(phi.len() + own.len() + 1);
    x.extend_from_slice(phi);
    x.extend_from_slice(own);
    x.push(1.0);
    x
}

#[derive(Clone, Debug)]
pub struct StructCknModel {
    pub embedding: Option<Embedding>,
    pub ckn: CknModel,
    pub scaler: Scaler,
    pub weights: Vec<f64>,
    pub feature_dim: usize,
    pub heads: Option<AuxHeads>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format_version: u32,
    #[serde(default)]
    embedding: Option<Embedding>,
    ckn: CknRecord,
    scaler: Scaler,
    weights: Vec<f64>,
    feature_dim: usize,
    #[serde(default)]
    heads: Option<AuxHeads>,
}

/// Decoded labels with per-node probability tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

impl StructCknModel {
    pub fn input_map(&self, input: &NodeInput) -> Result<FeatureMap> {
        match input {
            NodeInput::Map(m) => Ok(m.clone()),
            NodeInput::Categorical(c) => self
                .embedding
                .as_ref()
                .ok_or_else(|| Error::Config("categorical input but the model has no embedding".into()))?
                .forward(c),
        }
    }

    /// Unscaled CKN features of one node.
    pub fn raw_features(&self, input: &NodeInput) -> Result<Vec<f64>> {
        Ok(ckn_features(&self.input_map(input)?, &self.ckn)?.data)
    }

    /// Scaled features of every node of an example.
    pub fn features(&self, ex: &StructExample) -> Result<Vec<Vec<f64>>> {
        ex.inputs.iter().map(|inp| self.scaler.apply(&self.raw_features(inp)?)).collect()
    }

    pub fn crf(&self, ex: &StructExample) -> Result<FactorGraphModel> {
        let m = ex.template.instantiate(self.features(ex)?)?;
        if m.dim != self.weights.len() {
            return Err(Error::Dimension(format!(
                "example needs {} weights, model has {}",
                m.dim,
                self.weights.len()
            )));
        }
        Ok(m)
    }

    /// Exact marginals and Viterbi on chains, AD3 with peaked marginals on
    /// general graphs.
    pub fn infer_labels(&self, ex: &StructExample, ad3: &Ad3Config, epsilon: f64) -> Result<Prediction> {
        let crf = self.crf(ex)?;
        predict_crf(&crf, &self.weights, ad3, epsilon)
    }

    /// `(P(begin), P(layover))` per node.
    pub fn aux_probabilities(&self, ex: &StructExample) -> Result<Vec<(f64, f64)>> {
        let heads = self.heads.as_ref().ok_or_else(|| Error::Config("model has no auxiliary heads".into()))?;
        let aux = ex.aux.as_ref().ok_or_else(|| Error::Contract("example carries no auxiliary features".into()))?;
        let phis = self.features(ex)?;
        phis.iter()
            .zip(&aux.own)
            .map(|(phi, own)| {
                let x = head_input(phi, own);
                Ok((sigmoid(crate::graph::dot(&heads.begin, &x)), sigmoid(crate::graph::dot(&heads.layover, &x))))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ModelRecord {
            format_version: MODEL_FORMAT_VERSION,
            embedding: self.embedding.clone(),
            ckn: CknRecord::from(&self.ckn),
            scaler: self.scaler.clone(),
            weights: self.weights.clone(),
            feature_dim: self.feature_dim,
            heads: self.heads.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_str(s)?;
        if rec.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format version {}", rec.format_version)));
        }
        Ok(Self {
            embedding: rec.embedding,
            ckn: rec.ckn.into_model()?,
            scaler: rec.scaler,
            weights: rec.weights,
            feature_dim: rec.feature_dim,
            heads: rec.heads,
        })
    }
}

pub(crate) fn predict_crf(crf: &FactorGraphModel, w: &[f64], ad3: &Ad3Config, epsilon: f64) -> Result<Prediction> {
    let r = map_inference(crf, w, ad3)?;
    let probabilities = if crf.logic_factors.is_empty() && crf.potentials(w).is_chain() {
        sum_product_chain(&crf.potentials(w))?.1.nodes
    } else {
        peaked_for_model(crf, &r.map_labeling, epsilon)?.nodes
    };
    Ok(Prediction { labels: r.map_labeling, probabilities })
}
