use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structckn::ckn::{ckn_backward, ckn_forward, inv_sqrt_kernel, CknLayer, CknModel, FeatureMap, InvSqrtMode, KernelConfig};
use structckn::trainer::{CategoricalMap, Embedding, EmbeddingField};

const STEP: f64 = 1e-4;

/// Fourth-order central difference.
fn central(f: impl Fn(f64) -> f64) -> f64 {
    (f(-2.0 * STEP) - 8.0 * f(-STEP) + 8.0 * f(STEP) - f(2.0 * STEP)) / (12.0 * STEP)
}

/// Relative error with the denominator floored at 1% of the largest analytic
/// component, so entries that are numerically zero do not dominate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-2 * scale).max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
    FeatureMap::new(h, w, c, (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub struct CknCase {
    pub model: CknModel,
    pub image: FeatureMap,
    pub probe: FeatureMap,
}

/// A random network of one or two layers on a small random image, with a
/// random linear probe on its output.
pub fn random_ckn_case(seed: u64) -> CknCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=2);
    let in_c = rng.gen_range(1..=2);
    let (h, w) = (rng.gen_range(5..=8), rng.gen_range(5..=8));
    let mut layers = Vec::new();
    let mut c = in_c;
    for _ in 0..depth {
        let ph = rng.gen_range(1..=2);
        let mut pw = rng.gen_range(1..=2);
        if c * ph * pw < 2 {
            // filters on a 0-sphere collapse onto each other
            pw = 2;
        }
        let p = rng.gen_range(2..=4);
        let kernel = KernelConfig::new(rng.gen_range(0.5..2.0), 1e-6).unwrap();
        let z = random_matrix(&mut rng, c * ph * pw, p);
        layers.push(CknLayer::new(ph, pw, c, z, rng.gen_range(0.4..1.0), rng.gen_range(1..=2), kernel).unwrap());
        c = p;
    }
    let model = CknModel::new(in_c, layers).unwrap();
    let image = random_map(&mut rng, h, w, in_c);
    let (out, _) = ckn_forward(&image, &model).unwrap();
    let probe = random_map(&mut rng, out.height, out.width, out.channels);
    CknCase { model, image, probe }
}

fn probe_loss(model: &CknModel, image: &FeatureMap, probe: &FeatureMap) -> f64 {
    let (out, _) = ckn_forward(image, model).unwrap();
    out.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
}

/// Largest relative error of the filter and input gradients against central
/// differences. In frozen mode the inverse square root stays fixed while the
/// filters are perturbed.
pub fn ckn_gradcheck(case: &CknCase, mode: InvSqrtMode) -> f64 {
    let (_, cache) = ckn_forward(&case.image, &case.model).unwrap();
    let g = ckn_backward(&case.probe, &cache, &case.model, mode).unwrap();
    let mut worst = 0.0f64;
    for (li, layer) in case.model.layers.iter().enumerate() {
        let mut numeric = Vec::with_capacity(layer.filters.len());
        for k in 0..layer.filters.len() {
            let eval = |delta: f64| {
                let mut m = case.model.clone();
                let l = &mut m.layers[li];
                l.filters[k] += delta;
                if mode == InvSqrtMode::Full {
                    l.inv_sqrt = inv_sqrt_kernel(&l.filters, &l.kernel).unwrap();
                }
                probe_loss(&m, &case.image, &case.probe)
            };
            numeric.push(central(eval));
        }
        worst = worst.max(max_relative_error(g.filters[li].as_slice(), &numeric));
    }
    let numeric: Vec<f64> = (0..case.image.data.len())
        .map(|k| {
            central(|delta| {
                let mut img = case.image.clone();
                img.data[k] += delta;
                probe_loss(&case.model, &img, &case.probe)
            })
        })
        .collect();
    worst.max(max_relative_error(&g.input.data, &numeric))
}

/// Embedding followed by a one-layer network; checks the table gradients.
pub fn embedding_gradcheck(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<EmbeddingField> = (0..rng.gen_range(1..=3))
        .map(|f| EmbeddingField { name: format!("f{f}"), vocab: rng.gen_range(2..=4), dim: rng.gen_range(1..=3) })
        .collect();
    let emb = Embedding::new(fields.clone(), seed).unwrap();
    let width = rng.gen_range(3..=6);
    let input = CategoricalMap {
        columns: (0..width)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    None
                } else {
                    Some(fields.iter().map(|f| rng.gen_range(0..f.vocab)).collect())
                }
            })
            .collect(),
    };
    let n_d = emb.n_d();
    let pw = rng.gen_range(1..=2);
    let p = rng.gen_range(2..=4);
    let layer = CknLayer::new(n_d, pw, 1, random_matrix(&mut rng, n_d * pw, p), 0.6, 1, KernelConfig::default()).unwrap();
    let model = CknModel::new(1, vec![layer]).unwrap();
    let map = emb.forward(&input).unwrap();
    let (out, cache) = ckn_forward(&map, &model).unwrap();
    let probe = random_map(&mut rng, out.height, out.width, out.channels);
    let g = ckn_backward(&probe, &cache, &model, InvSqrtMode::Full).unwrap();
    let mut tables = emb.zero_grad();
    emb.backward(&input, &g.input, &mut tables).unwrap();

    let mut worst = 0.0f64;
    for (f, analytic) in tables.iter().enumerate().take(fields.len()) {
        let numeric: Vec<f64> = (0..emb.tables[f].len())
            .map(|k| {
                let eval = |delta: f64| {
                    let mut e = emb.clone();
                    e.tables[f][k] += delta;
                    probe_loss(&model, &e.forward(&input).unwrap(), &probe)
                };
                central(eval)
            })
            .collect();
        worst = worst.max(max_relative_error(analytic, &numeric));
    }
    worst
}
