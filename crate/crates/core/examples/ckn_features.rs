//! Unsupervised two-layer CKN on synthetic handwriting images.
//!
//! ```bash
//! cargo run --release --example ckn_features
//! ```

use structckn::ckn::{ckn_features, kappa, nystrom_project, unsupervised_init, FeatureMap, LayerSpec};
use structckn::ocr::{synthetic_ocr, OCR_HEIGHT, OCR_WIDTH};

fn main() -> structckn::Result<()> {
    let data = synthetic_ocr(100, 0);
    let images: Vec<FeatureMap> = data
        .words
        .iter()
        .flat_map(|w| &w.images)
        .map(|img| FeatureMap::new(OCR_HEIGHT, OCR_WIDTH, 1, img.iter().map(|&p| p as f64).collect()))
        .collect::<structckn::Result<_>>()?;
    println!("{} character images", images.len());

    let specs = [
        LayerSpec { patch_h: 3, patch_w: 3, filters: 32, pool_beta: 1.0, subsample: 2, kernel: Default::default() },
        LayerSpec { patch_h: 2, patch_w: 2, filters: 64, pool_beta: 1.0, subsample: 1, kernel: Default::default() },
    ];
    let model = unsupervised_init(&images, &specs, 10, 10, 7)?;
    for (k, layer) in model.layers.iter().enumerate() {
        println!("layer {k}: {} filters over {}-dim patches", layer.n_filters(), layer.patch_dim());
    }

    let out = ckn_features(&images[0], &model)?;
    println!("output map {}x{}x{}", out.height, out.width, out.channels);

    // projected filters reproduce the kernel between filters
    let layer = &model.layers[0];
    let z0: Vec<f64> = layer.filters.column(0).iter().copied().collect();
    let z1: Vec<f64> = layer.filters.column(1).iter().copied().collect();
    let (g0, g1) = (nystrom_project(&z0, layer), nystrom_project(&z1, layer));
    let ip: f64 = g0.iter().zip(&g1).map(|(a, b)| a * b).sum();
    let cos: f64 = z0.iter().zip(&z1).map(|(a, b)| a * b).sum();
    println!("<G(z0), G(z1)> = {ip:.9}, kappa(z0.z1) = {:.9}", kappa(cos, &layer.kernel).0);
    Ok(())
}
