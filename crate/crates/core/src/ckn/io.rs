use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CknLayer, CknModel, KernelConfig};
use crate::error::{Error, Result};

pub const CKN_FORMAT_VERSION: u32 = 1;

/// On-disk layer record. Filters are stored row-major with `dims = [rows, cols]`;
/// the inverse square root is recomputed on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerRecord {
    pub patch_h: usize,
    pub patch_w: usize,
    pub alpha: f64,
    #[serde(default = "default_floor")]
    pub eigen_floor: f64,
    pub pool_beta: f64,
    pub subsample: usize,
    pub filters: Vec<f64>,
    pub dims: [usize; 2],
}

fn default_floor() -> f64 {
    KernelConfig::default().eigen_floor
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CknRecord {
    pub format_version: u32,
    pub input_channels: usize,
    pub layers: Vec<LayerRecord>,
}

impl From<&CknModel> for CknRecord {
    fn from(m: &CknModel) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| {
                let (r, c) = l.filters.shape();
                let mut filters = Vec::with_capacity(r * c);
                for i in 0..r {
                    filters.extend(l.filters.row(i).iter());
                }
                LayerRecord {
                    patch_h: l.patch_h,
                    patch_w: l.patch_w,
                    alpha: l.kernel.alpha,
                    eigen_floor: l.kernel.eigen_floor,
                    pool_beta: l.pool_beta,
                    subsample: l.subsample,
                    filters,
                    dims: [r, c],
                }
            })
            .collect();
        Self { format_version: CKN_FORMAT_VERSION, input_channels: m.input_channels, layers }
    }
}

impl CknRecord {
    pub fn into_model(self) -> Result<CknModel> {
        if self.format_version != CKN_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported CKN format version {}",
                self.format_version
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut c = self.input_channels;
        for rec in self.layers {
            let [r, cols] = rec.dims;
            if rec.filters.len() != r * cols {
                return Err(Error::Dimension("filter array does not match dims".into()));
            }
            let z = DMatrix::from_row_slice(r, cols, &rec.filters);
            let kernel = KernelConfig::new(rec.alpha, rec.eigen_floor)?;
            let layer = CknLayer::new(rec.patch_h, rec.patch_w, c, z, rec.pool_beta, rec.subsample, kernel)?;
            c = layer.n_filters();
            layers.push(layer);
        }
        CknModel::new(self.input_channels, layers)
    }
}

impl CknModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CknRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<CknRecord>(s)?.into_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recomputes_inv_sqrt() {
        let z = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5]);
        let l = CknLayer::new(2, 2, 1, z, 0.7, 2, KernelConfig { alpha: 1.5, eigen_floor: 1e-6 }).unwrap();
        let m = CknModel::new(1, vec![l]).unwrap();
        let back = CknModel::from_json(&m.to_json().unwrap()).unwrap();
        let (a, b) = (&m.layers[0], &back.layers[0]);
        assert!((&a.filters - &b.filters).amax() < 1e-15);
        assert!((&a.inv_sqrt.value - &b.inv_sqrt.value).amax() < 1e-8);
        assert_eq!(a.subsample, b.subsample);
    }

    #[test]
    fn rejects_unknown_version() {
        let rec = CknRecord { format_version: 99, input_channels: 1, layers: vec![] };
        assert!(rec.into_model().is_err());
    }
}
