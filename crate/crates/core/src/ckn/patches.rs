use nalgebra::DMatrix;

use super::FeatureMap;
use crate::error::{Error, Result};

/// Number of valid patch positions along each axis (no padding).
pub fn patch_grid(map: &FeatureMap, patch_h: usize, patch_w: usize) -> Result<(usize, usize)> {
    if patch_h == 0 || patch_w == 0 {
        return Err(Error::Dimension("patch dimensions must be positive".into()));
    }
    if patch_h > map.height || patch_w > map.width {
        return Err(Error::Dimension(format!(
            "patch {patch_h}x{patch_w} larger than map {}x{}",
            map.height, map.width
        )));
    }
    Ok((map.height - patch_h + 1, map.width - patch_w + 1))
}

/// All valid patches as columns. Column `i * grid_w + j` holds the patch whose
/// top-left corner is `(i, j)`; within a column, entries run over patch rows,
/// then patch columns, then channels.
pub fn extract_patches(map: &FeatureMap, patch_h: usize, patch_w: usize) -> Result<DMatrix<f64>> {
    let (gh, gw) = patch_grid(map, patch_h, patch_w)?;
    let c = map.channels;
    let row_len = patch_w * c;
    let d = patch_h * row_len;
    let mut out = DMatrix::zeros(d, gh * gw);
    for i in 0..gh {
        for j in 0..gw {
            let mut col = out.column_mut(i * gw + j);
            for di in 0..patch_h {
                // a patch row is contiguous in the map
                let start = map.offset(i + di, j);
                let src = &map.data[start..start + row_len];
                col.rows_mut(di * row_len, row_len).copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`extract_patches`]: scatter-add column gradients back onto a
/// map of the given shape.
pub fn patches_adjoint(
    grads: &DMatrix<f64>,
    height: usize,
    width: usize,
    channels: usize,
    patch_h: usize,
    patch_w: usize,
) -> FeatureMap {
    let gh = height - patch_h + 1;
    let gw = width - patch_w + 1;
    let row_len = patch_w * channels;
    let mut out = FeatureMap::zeros(height, width, channels);
    for i in 0..gh {
        for j in 0..gw {
            let col = grads.column(i * gw + j);
            for di in 0..patch_h {
                let start = out.offset(i + di, j);
                let dst = &mut out.data[start..start + row_len];
                for (k, v) in dst.iter_mut().enumerate() {
                    *v += col[di * row_len + k];
                }
            }
        }
    }
    out
}
