use structckn::ckn::{unsupervised_init, FeatureMap, LayerSpec};
use structckn::ocr::{struct_examples, synthetic_ocr};
use structckn::rng::child_seed;
use structckn::trainer::{
    node_error_rate, train_struct_ckn, CknConfig, NodeInput, OptimizerConfig, ScalerKind, StructCknModel,
    StructExample, TrainConfig,
};

fn config(outer: usize, n_ep: usize) -> TrainConfig {
    TrainConfig {
        ckn: CknConfig {
            layers: vec![LayerSpec {
                patch_h: 3,
                patch_w: 3,
                filters: 12,
                pool_beta: 0.5,
                subsample: 2,
                kernel: Default::default(),
            }],
            patches_per_image: 5,
            kmeans_iters: 5,
            init_maps: 100_000,
            inv_sqrt_mode: Default::default(),
        },
        optimizer: OptimizerConfig { outer_iters: outer, n_ep, ..OptimizerConfig::default() },
        scaler: ScalerKind::AverageUnitNorm,
        embedding: None,
        task: serde_json::Value::Null,
        seed: 17,
    }
}

fn mean_nll(model: &StructCknModel, data: &[StructExample], w: &[f64]) -> f64 {
    data.iter()
        .map(|ex| model.crf(ex).unwrap().neg_log_likelihood(w, &ex.label).unwrap())
        .sum::<f64>()
        / data.len() as f64
}

fn words(n: usize) -> Vec<StructExample> {
    struct_examples(&synthetic_ocr(n, 3).words)
}

#[test]
fn zero_outer_iterations_keep_unsupervised_filters() {
    let data = words(12);
    let cfg = config(0, 1);
    let (model, rows) = train_struct_ckn(&data, &[], &cfg, None).unwrap();
    assert!(rows.is_empty());
    let maps: Vec<FeatureMap> = data
        .iter()
        .flat_map(|ex| &ex.inputs)
        .map(|i| match i {
            NodeInput::Map(m) => m.clone(),
            NodeInput::Categorical(_) => unreachable!(),
        })
        .collect();
    let init = unsupervised_init(&maps, &cfg.ckn.layers, 5, 5, child_seed(cfg.seed, "ckn")).unwrap();
    assert_eq!(model.ckn.layers[0].filters, init.layers[0].filters);
}

#[test]
fn one_outer_iteration_lowers_training_loss() {
    let data = words(50);
    let (before, _) = train_struct_ckn(&data, &[], &config(0, 2), None).unwrap();
    let (after, rows) = train_struct_ckn(&data, &[], &config(1, 2), None).unwrap();
    assert_eq!(rows.len(), 1);
    let w = &before.weights;
    let l0 = mean_nll(&before, &data, w);
    let l1 = mean_nll(&after, &data, w);
    assert!(l1 < l0, "loss went from {l0} to {l1}");
}

#[test]
fn training_is_deterministic_and_probabilities_are_distributions() {
    let data = words(15);
    let test = struct_examples(&synthetic_ocr(5, 99).words);
    let cfg = config(2, 1);
    let (a, rows_a) = train_struct_ckn(&data, &test, &cfg, None).unwrap();
    let (b, rows_b) = train_struct_ckn(&data, &test, &cfg, None).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let strip = |r: &[structckn::optim::TrainLogRow]| r.iter().map(|x| (x.primal, x.dual, x.test_error)).collect::<Vec<_>>();
    assert_eq!(strip(&rows_a), strip(&rows_b));
    for ex in &test {
        let p = a.infer_labels(ex, &cfg.ad3(), 1e-6).unwrap();
        for row in &p.probabilities {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }
    let back = StructCknModel::from_json(&a.to_json().unwrap()).unwrap();
    let e1 = node_error_rate(&a, &test, &cfg.ad3(), 1e-6).unwrap();
    let e2 = node_error_rate(&back, &test, &cfg.ad3(), 1e-6).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn scaler_is_fit_on_training_data_only() {
    let data = words(10);
    let test = struct_examples(&synthetic_ocr(4, 7).words);
    let (model, _) = train_struct_ckn(&data, &test, &config(1, 1), None).unwrap();
    let raw: Vec<Vec<f64>> = data.iter().flat_map(|ex| ex.inputs.iter().map(|i| model.raw_features(i).unwrap())).collect();
    let refit = structckn::trainer::Scaler::fit(ScalerKind::AverageUnitNorm, &raw).unwrap();
    assert_eq!(model.scaler, refit);
}
