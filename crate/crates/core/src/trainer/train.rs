use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, EmbeddingField};
use super::model::{head_input, predict_crf, sigmoid, AuxHeads, NodeInput, StructCknModel, StructExample};
use super::scaler::{Scaler, ScalerKind};
use crate::ckn::{ckn_backward, ckn_forward, unsupervised_init, FeatureMap, InvSqrtMode, LayerSpec};
use crate::error::{Error, Result};
use crate::graph::{dot, primal_objective, Example};
use crate::inference::Ad3Config;
use crate::optim::{BcfwConfig, BcfwState, MarginalOracle, SdcaConfig, SdcaState, TrainLog, TrainLogRow};
use crate::rng::{child_rng, child_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CknConfig {
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_patches")]
    pub patches_per_image: usize,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    /// Upper bound on the number of node maps sampled for initialization.
    #[serde(default = "default_init_maps")]
    pub init_maps: usize,
    #[serde(default)]
    pub inv_sqrt_mode: InvSqrtMode,
}

fn default_patches() -> usize {
    10
}
fn default_kmeans_iters() -> usize {
    10
}
fn default_init_maps() -> usize {
    2000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sdca,
    Bcfw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lambda: Option<f64>,
    /// Predictor epochs per outer iteration.
    pub n_ep: usize,
    pub outer_iters: usize,
    pub ckn_lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    /// Node maps per CKN gradient step; `None` means one full-batch step.
    pub batch_size: Option<usize>,
    pub epsilon: f64,
    pub head_steps: usize,
    pub head_lr: f64,
    pub head_l2: f64,
    pub bcfw_averaging: bool,
    pub ad3_max_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sdca,
            lambda: None,
            n_ep: 10,
            outer_iters: 10,
            ckn_lr: 0.1,
            lr_decay_every: 20,
            lr_decay: 0.5,
            batch_size: None,
            epsilon: 1e-6,
            head_steps: 50,
            head_lr: 1.0,
            head_l2: 1e-4,
            bcfw_averaging: false,
            ad3_max_iters: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub fields: Vec<EmbeddingField>,
    #[serde(default = "yes")]
    pub trainable: bool,
}

fn yes() -> bool {
    true
}

/// Full training configuration; serialized as `{ckn, optimizer, scaler,
/// embedding, task, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ckn: CknConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub scaler: ScalerKind,
    #[serde(default)]
    pub embedding: Option<EmbeddingConfig>,
    #[serde(default)]
    pub task: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn ad3(&self) -> Ad3Config {
        Ad3Config { max_iters: self.optimizer.ad3_max_iters, ..Ad3Config::default() }
    }

    pub fn oracle(&self) -> MarginalOracle {
        MarginalOracle { ad3: self.ad3(), epsilon: self.optimizer.epsilon }
    }
}

enum Learner {
    Sdca(SdcaState),
    Bcfw(BcfwState),
}

impl Learner {
    fn weights(&self) -> &[f64] {
        match self {
            Learner::Sdca(s) => &s.w,
            Learner::Bcfw(b) => b.weights(),
        }
    }

    fn steps(&self) -> u64 {
        match self {
            Learner::Sdca(s) => s.step_count,
            Learner::Bcfw(b) => b.step_count,
        }
    }
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    model: StructCknModel,
    raw: Vec<Vec<Vec<f64>>>,
    data: Vec<Example>,
}

/// Character-level (per-node) error rate of `model` on `examples`.
pub fn node_error_rate(model: &StructCknModel, examples: &[StructExample], ad3: &Ad3Config, epsilon: f64) -> Result<f64> {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let p = model.infer_labels(ex, ad3, epsilon)?;
        wrong += p.labels.iter().zip(&ex.label).filter(|(a, b)| a != b).count();
        total += ex.label.len();
    }
    Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
}

impl<'a> Trainer<'a> {
    fn refresh(&mut self, train: &[StructExample]) -> Result<()> {
        self.raw = train
            .iter()
            .map(|ex| ex.inputs.iter().map(|inp| self.model.raw_features(inp)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let all: Vec<Vec<f64>> = self.raw.iter().flatten().cloned().collect();
        self.model.scaler = Scaler::fit(self.cfg.scaler, &all)?;
        self.data = train
            .iter()
            .zip(&self.raw)
            .map(|(ex, raw)| {
                let phis = raw.iter().map(|r| self.model.scaler.apply(r)).collect::<Result<Vec<_>>>()?;
                Ok(Example { model: ex.template.instantiate(phis)?, label: ex.label.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn train_heads(&mut self, train: &[StructExample]) {
        let Some(heads) = self.model.heads.as_mut() else { return };
        let mut xs = Vec::new();
        let mut begin = Vec::new();
        let mut layover = Vec::new();
        for (i, ex) in train.iter().enumerate() {
            let Some(aux) = &ex.aux else { continue };
            for t in 0..ex.inputs.len() {
                let phi = self.data[i].model.nodes[t].kronecker_phi();
                let x = head_input(phi, &aux.own[t]);
                begin.push((xs.len(), aux.begin[t]));
                if let Some(l) = aux.layover[t] {
                    layover.push((xs.len(), l));
                }
                xs.push(x);
            }
        }
        let opt = &self.cfg.optimizer;
        for (w, targets) in [(&mut heads.begin, &begin), (&mut heads.layover, &layover)] {
            if targets.is_empty() {
                continue;
            }
            let m = targets.len() as f64;
            for _ in 0..opt.head_steps {
                let mut g: Vec<f64> = w.iter().map(|v| opt.head_l2 * v).collect();
                for &(k, y) in targets.iter() {
                    let r = (sigmoid(dot(w, &xs[k])) - y as u8 as f64) / m;
                    for (gj, xj) in g.iter_mut().zip(&xs[k]) {
                        *gj += r * xj;
                    }
                }
                for (wj, gj) in w.iter_mut().zip(&g) {
                    *wj -= opt.head_lr * gj;
                }
            }
        }
    }

    /// Gradient of the mean structured NLL (plus auxiliary cross-entropies)
    /// with respect to each node's scaled features.
    fn feature_gradients(&self, w: &[f64], train: &[StructExample]) -> Result<Vec<Vec<Vec<f64>>>> {
        let oracle = self.cfg.oracle();
        let n = self.data.len() as f64;
        let n_aux_nodes: usize = train.iter().filter(|e| e.aux.is_some()).map(|e| e.inputs.len()).sum();
        let d = self.model.feature_dim;
        let mut out = Vec::with_capacity(self.data.len());
        for (i, ex) in self.data.iter().enumerate() {
            let mu = oracle.marginals(&ex.model, w)?;
            let mut per_node = Vec::with_capacity(ex.model.nodes.len());
            for (t, node) in ex.model.nodes.iter().enumerate() {
                let mut coef = mu.nodes[t].clone();
                coef[ex.label[t]] -= 1.0;
                let mut g = node.feature_gradient(w, &coef);
                g.iter_mut().for_each(|v| *v /= n);
                if let (Some(heads), Some(aux)) = (&self.model.heads, &train[i].aux) {
                    let x = head_input(node.kronecker_phi(), &aux.own[t]);
                    let scale = 1.0 / n_aux_nodes.max(1) as f64;
                    let rb = (sigmoid(dot(&heads.begin, &x)) - aux.begin[t] as u8 as f64) * scale;
                    for j in 0..d {
                        g[j] += rb * heads.begin[j];
                    }
                    if let Some(l) = aux.layover[t] {
                        let rl = (sigmoid(dot(&heads.layover, &x)) - l as u8 as f64) * scale;
                        for j in 0..d {
                            g[j] += rl * heads.layover[j];
                        }
                    }
                }
                per_node.push(g);
            }
            out.push(per_node);
        }
        Ok(out)
    }

    fn ckn_step(&mut self, w: &[f64], train: &[StructExample], lr: f64, rng: &mut crate::rng::Rng) -> Result<()> {
        let grads = self.feature_gradients(w, train)?;
        let mut nodes: Vec<(usize, usize)> =
            train.iter().enumerate().flat_map(|(i, ex)| (0..ex.inputs.len()).map(move |t| (i, t))).collect();
        let batch = match self.cfg.optimizer.batch_size {
            Some(b) if b > 0 => {
                nodes.shuffle(rng);
                b
            }
            _ => nodes.len(),
        };
        let total = nodes.len() as f64;
        for chunk in nodes.chunks(batch) {
            let rescale = total / chunk.len() as f64;
            let mut filter_grads: Vec<DMatrix<f64>> =
                self.model.ckn.layers.iter().map(|l| DMatrix::zeros(l.filters.nrows(), l.filters.ncols())).collect();
            let mut emb_grads = self.model.embedding.as_ref().map(Embedding::zero_grad);
            for &(i, t) in chunk {
                let input = self.model.input_map(&train[i].inputs[t])?;
                let (out, cache) = ckn_forward(&input, &self.model.ckn)?;
                let g_raw = self.model.scaler.backward(&self.raw[i][t], &grads[i][t])?;
                let g_map = FeatureMap::new(out.height, out.width, out.channels, g_raw)?;
                let g = ckn_backward(&g_map, &cache, &self.model.ckn, self.cfg.ckn.inv_sqrt_mode)?;
                for (acc, gl) in filter_grads.iter_mut().zip(&g.filters) {
                    *acc += gl;
                }
                if let (Some(acc), Some(emb), NodeInput::Categorical(c)) =
                    (emb_grads.as_mut(), self.model.embedding.as_ref(), &train[i].inputs[t])
                {
                    emb.backward(c, &g.input, acc)?;
                }
            }
            for (layer, g) in self.model.ckn.layers.iter_mut().zip(&filter_grads) {
                let z = &layer.filters - g * (lr * rescale);
                layer.set_filters(z)?;
            }
            if let (Some(emb), Some(g)) = (self.model.embedding.as_mut(), emb_grads.as_ref()) {
                let scaled: Vec<Vec<f64>> = g.iter().map(|t| t.iter().map(|v| v * rescale).collect()).collect();
                emb.step(&scaled, lr);
            }
        }
        Ok(())
    }
}

/// Struct-CKN training on a list of structured examples.
pub fn train_struct_ckn(
    train: &[StructExample],
    test: &[StructExample],
    cfg: &TrainConfig,
    mut log: Option<&mut TrainLog>,
) -> Result<(StructCknModel, Vec<TrainLogRow>)> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let start = Instant::now();
    let seed = cfg.seed;
    let embedding = match &cfg.embedding {
        Some(e) => {
            let mut emb = Embedding::new(e.fields.clone(), child_seed(seed, "embedding"))?;
            emb.trainable = e.trainable;
            Some(emb)
        }
        None => None,
    };
    let needs_embedding = train.iter().flat_map(|e| &e.inputs).any(|i| matches!(i, NodeInput::Categorical(_)));
    if needs_embedding && embedding.is_none() {
        return Err(Error::Config("categorical inputs need an embedding section".into()));
    }

    // unsupervised CKN initialization on a sample of node maps
    let mut rng = child_rng(seed, "trainer");
    let mut refs: Vec<(usize, usize)> =
        train.iter().enumerate().flat_map(|(i, ex)| (0..ex.inputs.len()).map(move |t| (i, t))).collect();
    refs.shuffle(&mut rng);
    refs.truncate(cfg.ckn.init_maps.max(1));
    refs.sort_unstable();
    let probe = StructCknModel {
        embedding: embedding.clone(),
        ckn: crate::ckn::CknModel::new(1, Vec::new())?,
        scaler: Scaler::AverageUnitNorm { mean_norm: 1.0 },
        weights: Vec::new(),
        feature_dim: 0,
        heads: None,
    };
    let maps: Vec<FeatureMap> = refs.iter().map(|&(i, t)| probe.input_map(&train[i].inputs[t])).collect::<Result<_>>()?;
    let ckn = unsupervised_init(&maps, &cfg.ckn.layers, cfg.ckn.patches_per_image, cfg.ckn.kmeans_iters, child_seed(seed, "ckn"))?;
    let feature_dim = ckn.output_len(maps[0].height, maps[0].width)?;
    let own_dim = train.iter().find_map(|e| e.aux.as_ref().and_then(|a| a.own.first().map(Vec::len)));
    let heads = own_dim.map(|k| AuxHeads { begin: vec![0.0; feature_dim + k + 1], layover: vec![0.0; feature_dim + k + 1] });
    let mut tr = Trainer {
        cfg,
        model: StructCknModel { embedding, ckn, scaler: Scaler::AverageUnitNorm { mean_norm: 1.0 }, weights: Vec::new(), feature_dim, heads },
        raw: Vec::new(),
        data: Vec::new(),
    };
    tr.refresh(train)?;

    let opt = &cfg.optimizer;
    let mut learner = match opt.kind {
        OptimizerKind::Sdca => Learner::Sdca(SdcaState::init(
            &tr.data,
            &SdcaConfig { lambda: opt.lambda, seed: child_seed(seed, "sdca"), ..SdcaConfig::default() },
        )?),
        OptimizerKind::Bcfw => Learner::Bcfw(BcfwState::init(
            &tr.data,
            &BcfwConfig {
                lambda: opt.lambda,
                seed: child_seed(seed, "bcfw"),
                averaging: opt.bcfw_averaging,
                ad3: cfg.ad3(),
                ..BcfwConfig::default()
            },
        )?),
    };
    let oracle = cfg.oracle();
    let mut rows = Vec::new();
    let mut lr = opt.ckn_lr;
    let mut last_primal: Option<f64> = None;
    let mut rising = 0;
    for outer in 0..opt.outer_iters {
        for _ in 0..opt.n_ep {
            match &mut learner {
                Learner::Sdca(s) => s.epoch(&tr.data, &oracle)?,
                Learner::Bcfw(b) => b.epoch(&tr.data)?,
            }
        }
        tr.train_heads(train);
        if outer > 0 && opt.lr_decay_every > 0 && outer % opt.lr_decay_every == 0 {
            lr *= opt.lr_decay;
        }
        let w = learner.weights().to_vec();
        tr.ckn_step(&w, train, lr, &mut rng)?;
        tr.refresh(train)?;
        match &mut learner {
            Learner::Sdca(s) => s.refresh_weights(&tr.data)?,
            Learner::Bcfw(b) => b.w = b.recompute_weights(&tr.data),
        }

        let (primal, dual, gap) = objectives(&mut learner, &tr.data, &oracle)?;
        tr.model.weights = learner.weights().to_vec();
        let test_error = if test.is_empty() { f64::NAN } else { node_error_rate(&tr.model, test, &cfg.ad3(), opt.epsilon)? };
        let row = TrainLogRow {
            epoch: outer + 1,
            step: learner.steps(),
            primal,
            dual,
            gap,
            test_error,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("outer {} primal {primal:.6} gap {gap:.3e} test_error {test_error:.4}", outer + 1);
        if let Some(l) = log.as_deref_mut() {
            l.write(&row)?;
        }
        rows.push(row);
        if primal.is_finite() {
            if let Some(prev) = last_primal {
                if primal > prev * 1.1 && primal > prev {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            if rising >= 5 {
                return Err(Error::Divergence(format!(
                    "primal objective rose by more than 10% for 5 consecutive outer iterations (now {primal})"
                )));
            }
            last_primal = Some(primal);
        }
    }
    if opt.outer_iters == 0 {
        for _ in 0..opt.n_ep {
            match &mut learner {
                Learner::Sdca(s) => s.epoch(&tr.data, &oracle)?,
                Learner::Bcfw(b) => b.epoch(&tr.data)?,
            }
        }
        tr.train_heads(train);
    }
    tr.model.weights = learner.weights().to_vec();
    Ok((tr.model, rows))
}

fn objectives(learner: &mut Learner, data: &[Example], oracle: &MarginalOracle) -> Result<(f64, f64, f64)> {
    let chains = data.iter().all(|e| e.model.logic_factors.is_empty() && e.model.potentials(&vec![0.0; e.model.dim]).is_chain());
    Ok(match learner {
        Learner::Sdca(s) => {
            let dual = s.dual_objective()?;
            let gap = s.duality_gap(data, oracle)?;
            let primal = if chains { primal_objective(&s.w, data, s.lambda)? } else { dual + gap };
            (primal, dual, gap)
        }
        Learner::Bcfw(b) => {
            let dual = b.dual_objective();
            let primal = b.primal_objective(data)?;
            (primal, dual, primal - dual)
        }
    })
}

/// Batch variant: every example is one CRF instance and CKN updates run on
/// shuffled mini-batches of node maps (default 128) pooled across instances.
pub fn batch_train_struct_ckn(
    instances: &[StructExample],
    cfg: &TrainConfig,
    log: Option<&mut TrainLog>,
) -> Result<(StructCknModel, Vec<TrainLogRow>)> {
    let mut cfg = cfg.clone();
    if cfg.optimizer.batch_size.is_none() {
        cfg.optimizer.batch_size = Some(128);
    }
    train_struct_ckn(instances, &[], &cfg, log)
}

/// Decode every example; returns `(labels, probabilities)` per example.
pub fn predict_all(
    model: &StructCknModel,
    examples: &[StructExample],
    ad3: &Ad3Config,
    epsilon: f64,
) -> Result<Vec<super::model::Prediction>> {
    examples
        .iter()
        .map(|ex| {
            let crf = model.crf(ex)?;
            predict_crf(&crf, &model.weights, ad3, epsilon)
        })
        .collect()
}
