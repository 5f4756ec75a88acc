use serde::{Deserialize, Serialize};

use super::{
    all_candidates, break_illegal, crew_embedding_fields, flight_example, generate_instance, greedy_build_pairings,
    plan_from_model, BidPeriod, BreakStats, Decoding, GeneratorParams, Instance, PairingPlan, RuleSet,
};
use crate::ckn::{KernelConfig, LayerSpec};
use crate::cpp::CostConfig;
use crate::error::{Error, Result};
use crate::inference::Ad3Config;
use crate::optim::{TrainLog, TrainLogRow};
use crate::rng::child_seed;
use crate::trainer::{
    batch_train_struct_ckn, CknConfig, EmbeddingConfig, OptimizerConfig, ScalerKind, StructCknModel, StructExample,
    TrainConfig,
};

/// Instances for the flight task: a shared generator setting and one seed
/// per instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlightData {
    pub generator: GeneratorParams,
    pub rules: RuleSet,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
}

impl Default for FlightData {
    fn default() -> Self {
        Self {
            generator: GeneratorParams { n_cities: 12, n_bases: 3, n_flights: 500, horizon_days: 7, aircraft_types: 3, seed: 0 },
            rules: RuleSet::default(),
            train_seeds: (100..116).collect(),
            test_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl FlightData {
    pub fn instances(&self, seeds: &[u64]) -> Result<Vec<Instance>> {
        seeds
            .iter()
            .map(|&s| generate_instance(&GeneratorParams { seed: s, ..self.generator.clone() }, &self.rules))
            .collect()
    }
}

/// A one-layer CKN over the embedded candidate map: each filter spans the
/// full embedding height of one candidate column.
pub fn default_flight_config(generator: &GeneratorParams, rules: &RuleSet, seed: u64) -> TrainConfig {
    let fields = crew_embedding_fields(generator.n_cities, generator.aircraft_types, rules);
    let n_d = fields.iter().map(|f| f.dim).sum();
    TrainConfig {
        ckn: CknConfig {
            layers: vec![LayerSpec {
                patch_h: n_d,
                patch_w: 1,
                filters: 64,
                pool_beta: 0.5,
                subsample: 1,
                kernel: KernelConfig::default(),
            }],
            patches_per_image: 5,
            kmeans_iters: 10,
            init_maps: 2000,
            inv_sqrt_mode: Default::default(),
        },
        optimizer: OptimizerConfig { n_ep: 3, outer_iters: 3, lambda: Some(1e-2), ..OptimizerConfig::default() },
        scaler: ScalerKind::AverageUnitNorm,
        embedding: Some(EmbeddingConfig { fields, trainable: true }),
        task: serde_json::Value::Null,
        seed: child_seed(seed, "flight"),
    }
}

pub fn flight_examples(instances: &[Instance]) -> Result<Vec<StructExample>> {
    instances.iter().map(|inst| flight_example(inst, &all_candidates(inst))).collect()
}

/// Train the next-flight model with its begin and layover heads; one CRF per instance.
pub fn train_flight_model(
    instances: &[Instance],
    cfg: &TrainConfig,
    log: Option<&mut TrainLog>,
) -> Result<(StructCknModel, Vec<TrainLogRow>)> {
    if instances.iter().any(|i| i.ground_truth.is_empty()) {
        return Err(Error::Config("training instances need ground-truth pairings".into()));
    }
    batch_train_struct_ckn(&flight_examples(instances)?, cfg, log)
}

/// Predict, greedily assemble pairings, then strip illegal ones.
pub fn predicted_plan(
    model: &StructCknModel,
    inst: &Instance,
    decoding: Decoding,
    ad3: &Ad3Config,
    cost: &CostConfig,
) -> Result<(PairingPlan, BreakStats)> {
    let cands = all_candidates(inst);
    let pred = plan_from_model(model, inst, &cands, decoding, ad3)?;
    let raw = greedy_build_pairings(&pred, inst);
    break_illegal(&raw, inst, &BidPeriod::default(), cost)
}
