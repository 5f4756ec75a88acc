use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kmeans::spherical_kmeans;
use super::layer::CknLayer;
use super::patches::{extract_patches, patch_grid, patches_adjoint};
use super::pool::{gaussian_pool, gaussian_pool_adjoint};
use super::{FeatureMap, KernelConfig};
use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from};

/// A stack of convolutional kernel layers.
#[derive(Clone, Debug)]
pub struct CknModel {
    pub input_channels: usize,
    pub layers: Vec<CknLayer>,
}

/// Hyperparameters for one layer of an unsupervised initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub patch_h: usize,
    pub patch_w: usize,
    pub filters: usize,
    #[serde(default = "default_beta")]
    pub pool_beta: f64,
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
}

fn default_beta() -> f64 {
    0.5
}

fn default_subsample() -> usize {
    2
}

/// How the backward pass treats `kappa(Z^T Z)^{-1/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InvSqrtMode {
    /// Differentiate through the eigendecomposition.
    #[default]
    Full,
    /// Treat the inverse square root as a constant for this step.
    Frozen,
}

/// Intermediates of one layer's forward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input_h: usize,
    pub input_w: usize,
    pub input_c: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub norms: Vec<f64>,
    /// Normalized patches (zero columns stay zero).
    pub units: DMatrix<f64>,
    /// `Z^T u` per location.
    pub pre: DMatrix<f64>,
    /// `kappa(Z^T u)` per location.
    pub act: DMatrix<f64>,
    /// `inv_sqrt * act` per location, before the norm rescaling.
    pub projected: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
pub struct CknGradients {
    pub filters: Vec<DMatrix<f64>>,
    pub input: FeatureMap,
}

impl CknModel {
    pub fn new(input_channels: usize, layers: Vec<CknLayer>) -> Result<Self> {
        let mut c = input_channels;
        for (i, l) in layers.iter().enumerate() {
            if l.in_channels != c {
                return Err(Error::Dimension(format!(
                    "layer {i} expects {} input channels but receives {c}",
                    l.in_channels
                )));
            }
            c = l.n_filters();
        }
        Ok(Self { input_channels, layers })
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(self.input_channels, CknLayer::n_filters)
    }

    /// Spatial shape of the final map for an input of the given size.
    pub fn output_shape(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let (mut h, mut w) = (height, width);
        for (i, l) in self.layers.iter().enumerate() {
            if l.patch_h > h || l.patch_w > w {
                return Err(Error::Dimension(format!(
                    "layer {i}: map {h}x{w} is smaller than patch {}x{}",
                    l.patch_h, l.patch_w
                )));
            }
            h = (h - l.patch_h + 1).div_ceil(l.subsample);
            w = (w - l.patch_w + 1).div_ceil(l.subsample);
        }
        Ok((h, w))
    }

    /// Flattened length of the final map for an input of the given size.
    pub fn output_len(&self, height: usize, width: usize) -> Result<usize> {
        let (h, w) = self.output_shape(height, width)?;
        Ok(h * w * self.output_channels())
    }
}

fn layer_forward(input: &FeatureMap, layer: &CknLayer, index: usize) -> Result<(FeatureMap, LayerCache)> {
    let (gh, gw) = patch_grid(input, layer.patch_h, layer.patch_w).map_err(|_| {
        Error::Dimension(format!(
            "layer {index}: map {}x{} is smaller than patch {}x{}",
            input.height, input.width, layer.patch_h, layer.patch_w
        ))
    })?;
    let mut units = extract_patches(input, layer.patch_h, layer.patch_w)?;
    let mut norms = Vec::with_capacity(units.ncols());
    for mut c in units.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
        norms.push(n);
    }
    let pre = layer.filters.transpose() * &units;
    let mut act = pre.clone();
    act.apply(|v| *v = layer.kernel.eval(*v).0);
    let projected = &layer.inv_sqrt.value * &act;
    let p = layer.n_filters();
    let mut data = Vec::with_capacity(p * gh * gw);
    for (j, col) in projected.column_iter().enumerate() {
        let n = norms[j];
        data.extend(col.iter().map(|v| if n > 0.0 { v * n } else { 0.0 }));
    }
    let map = FeatureMap { height: gh, width: gw, channels: p, data };
    let pooled = gaussian_pool(&map, layer.pool_beta, layer.subsample);
    let cache = LayerCache {
        input_h: input.height,
        input_w: input.width,
        input_c: input.channels,
        grid_h: gh,
        grid_w: gw,
        norms,
        units,
        pre,
        act,
        projected,
    };
    Ok((pooled, cache))
}

/// Run the network, returning the final map and the intermediates needed by
/// [`ckn_backward`].
pub fn ckn_forward(image: &FeatureMap, model: &CknModel) -> Result<(FeatureMap, ForwardCache)> {
    if image.channels != model.input_channels {
        return Err(Error::Dimension(format!(
            "image has {} channels, model expects {}",
            image.channels, model.input_channels
        )));
    }
    let mut current = image.clone();
    let mut caches = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let (next, cache) = layer_forward(&current, layer, i)?;
        caches.push(cache);
        current = next;
    }
    Ok((current, ForwardCache { layers: caches }))
}

/// Forward pass without keeping intermediates.
pub fn ckn_features(image: &FeatureMap, model: &CknModel) -> Result<FeatureMap> {
    let mut current = image.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        current = layer_forward(&current, layer, i)?.0;
    }
    Ok(current)
}

/// Backpropagate a gradient on the final map to every filter bank and to the
/// input image.
pub fn ckn_backward(
    grad_final: &FeatureMap,
    cache: &ForwardCache,
    model: &CknModel,
    mode: InvSqrtMode,
) -> Result<CknGradients> {
    if cache.layers.len() != model.layers.len() {
        return Err(Error::Contract("forward cache does not match the model depth".into()));
    }
    let mut grads = vec![DMatrix::zeros(0, 0); model.layers.len()];
    let mut g_out = grad_final.clone();
    for (idx, (layer, lc)) in model.layers.iter().zip(&cache.layers).enumerate().rev() {
        let p = layer.n_filters();
        let expect_h = lc.grid_h.div_ceil(layer.subsample);
        let expect_w = lc.grid_w.div_ceil(layer.subsample);
        if g_out.height != expect_h
            || g_out.width != expect_w
            || g_out.channels != p
            || lc.pre.nrows() != p
            || lc.units.nrows() != layer.patch_dim()
        {
            return Err(Error::Contract(format!("stale forward cache at layer {idx}")));
        }
        let g_map = gaussian_pool_adjoint(&g_out, lc.grid_h, lc.grid_w, layer.pool_beta, layer.subsample);
        let n_loc = lc.grid_h * lc.grid_w;
        let g_m = DMatrix::from_column_slice(p, n_loc, &g_map.data);

        // M = A E diag(n)
        let mut g_hat = g_m.clone();
        let mut g_norm = vec![0.0; n_loc];
        for j in 0..n_loc {
            let n = lc.norms[j];
            if n > 0.0 {
                g_norm[j] = g_m.column(j).dot(&lc.projected.column(j));
                g_hat.column_mut(j).scale_mut(n);
            } else {
                g_hat.column_mut(j).fill(0.0);
            }
        }
        let a = &layer.inv_sqrt.value;
        let mut g_s = a.transpose() * &g_hat;
        for (g, s) in g_s.iter_mut().zip(lc.pre.iter()) {
            *g *= layer.kernel.eval(*s).1;
        }
        // S = Z^T U
        let mut g_z = &lc.units * g_s.transpose();
        if mode == InvSqrtMode::Full {
            let g_a = &g_hat * lc.act.transpose();
            let g_k = layer.inv_sqrt.backward(&g_a);
            let c = layer.filters.transpose() * &layer.filters;
            let mut g_c = g_k;
            for (g, t) in g_c.iter_mut().zip(c.iter()) {
                *g *= layer.kernel.eval(*t).1;
            }
            let sym = &g_c + g_c.transpose();
            g_z += &layer.filters * sym;
        }
        grads[idx] = g_z;

        // back to the patches: u = x / |x|, n = |x|
        let g_u = &layer.filters * &g_s;
        let mut g_x = DMatrix::zeros(layer.patch_dim(), n_loc);
        for j in 0..n_loc {
            let n = lc.norms[j];
            if n == 0.0 {
                continue;
            }
            let u = lc.units.column(j);
            let gu = g_u.column(j);
            let radial = u.dot(&gu);
            let col = (gu - u * radial) / n + u * g_norm[j];
            g_x.set_column(j, &col);
        }
        g_out = patches_adjoint(&g_x, lc.input_h, lc.input_w, lc.input_c, layer.patch_h, layer.patch_w);
    }
    Ok(CknGradients { filters: grads, input: g_out })
}

/// Unsupervised layer-wise initialization: sample patches from the current
/// representation of every image, normalize them, and run spherical K-means.
pub fn unsupervised_init(
    images: &[FeatureMap],
    specs: &[LayerSpec],
    patches_per_image: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<CknModel> {
    let first = images
        .first()
        .ok_or_else(|| Error::Initialization("no images to initialize from".into()))?;
    let input_channels = first.channels;
    let mut model = CknModel::new(input_channels, Vec::new())?;
    let mut reps: Vec<FeatureMap> = images.to_vec();
    for (li, spec) in specs.iter().enumerate() {
        let mut rng = rng_from(child_seed(seed, &format!("ckn-init-patches-{li}")));
        let mut cols: Vec<f64> = Vec::new();
        let mut d = 0;
        for img in &reps {
            let all = extract_patches(img, spec.patch_h, spec.patch_w).map_err(|_| {
                Error::Dimension(format!(
                    "layer {li}: map {}x{} is smaller than patch {}x{}",
                    img.height, img.width, spec.patch_h, spec.patch_w
                ))
            })?;
            d = all.nrows();
            let n = all.ncols();
            let picks: Vec<usize> = if n <= patches_per_image {
                (0..n).collect()
            } else {
                (0..patches_per_image).map(|_| rng.gen_range(0..n)).collect()
            };
            for j in picks {
                let c = all.column(j);
                let norm = c.norm();
                if norm > 0.0 {
                    cols.extend(c.iter().map(|v| v / norm));
                }
            }
        }
        if cols.is_empty() {
            return Err(Error::Initialization(format!("layer {li}: all sampled patches are zero")));
        }
        let patches = DMatrix::from_column_slice(d, cols.len() / d, &cols);
        let km = spherical_kmeans(&patches, spec.filters, kmeans_iters, child_seed(seed, &format!("ckn-init-kmeans-{li}")))?;
        let in_c = reps[0].channels;
        let layer = CknLayer::new(
            spec.patch_h,
            spec.patch_w,
            in_c,
            km.centroids,
            spec.pool_beta,
            spec.subsample,
            spec.kernel,
        )?;
        reps = reps
            .iter()
            .map(|r| layer_forward(r, &layer, li).map(|x| x.0))
            .collect::<Result<_>>()?;
        model.layers.push(layer);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> CknModel {
        let z = DMatrix::from_column_slice(4, 3, &[1.0, 0.2, 0.0, 0.1, 0.0, 1.0, 0.3, 0.0, 0.5, 0.5, 0.5, -0.5]);
        let l = CknLayer::new(2, 2, 1, z, 0.5, 1, KernelConfig::default()).unwrap();
        CknModel::new(1, vec![l]).unwrap()
    }

    #[test]
    fn zero_image_gives_zero_map() {
        let m = small_model();
        let (out, _) = ckn_forward(&FeatureMap::zeros(4, 4, 1), &m).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_patches_give_pixel_features() {
        let z = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let l = CknLayer::new(1, 1, 2, z, 1e9, 1, KernelConfig::default()).unwrap();
        let m = CknModel::new(2, vec![l]).unwrap();
        let img = FeatureMap::new(1, 2, 2, vec![0.3, 0.4, 0.0, 2.0]).unwrap();
        let (out, _) = ckn_forward(&img, &m).unwrap();
        for c in 0..2 {
            let x = img.at(0, c);
            let g = super::super::nystrom_project(x, &m.layers[0]);
            for k in 0..2 {
                assert!((out.at(0, c)[k] - g[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shrinking_below_patch_names_layer() {
        let m = small_model();
        let e = ckn_forward(&FeatureMap::zeros(1, 4, 1), &m).unwrap_err();
        assert!(e.to_string().contains("layer 0"));
    }

    #[test]
    fn zero_upstream_gradient() {
        let m = small_model();
        let img = FeatureMap::new(4, 4, 1, (0..16).map(|v| f64::from(v).sin()).collect()).unwrap();
        let (out, cache) = ckn_forward(&img, &m).unwrap();
        let g = ckn_backward(&FeatureMap::zeros(out.height, out.width, out.channels), &cache, &m, InvSqrtMode::Full).unwrap();
        assert!(g.filters[0].iter().all(|&v| v == 0.0));
        assert!(g.input.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let m = small_model();
        let img = FeatureMap::zeros(4, 4, 1);
        let (_, cache) = ckn_forward(&img, &m).unwrap();
        let wrong = FeatureMap::zeros(2, 2, 3);
        assert!(matches!(ckn_backward(&wrong, &cache, &m, InvSqrtMode::Full), Err(Error::Contract(_))));
    }

    #[test]
    fn init_all_ones_single_filter() {
        let imgs = vec![FeatureMap::new(4, 4, 1, vec![1.0; 16]).unwrap(); 2];
        let spec = LayerSpec { patch_h: 2, patch_w: 2, filters: 1, pool_beta: 0.5, subsample: 1, kernel: KernelConfig::default() };
        let m = unsupervised_init(&imgs, &[spec], 5, 10, 0).unwrap();
        for v in m.layers[0].filters.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn init_rejects_all_zero_patches() {
        let imgs = vec![FeatureMap::zeros(4, 4, 1)];
        let spec = LayerSpec { patch_h: 2, patch_w: 2, filters: 1, pool_beta: 0.5, subsample: 1, kernel: KernelConfig::default() };
        assert!(matches!(unsupervised_init(&imgs, &[spec], 5, 10, 0), Err(Error::Initialization(_))));
    }
}
