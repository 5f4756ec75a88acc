use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::KernelConfig;
use crate::error::{Error, Result};

/// Eigendecomposition of `kappa(Z^T Z)` together with the floored inverse
/// square root built from it. The spectrum is kept for the backward pass.
#[derive(Clone, Debug)]
pub struct InvSqrt {
    pub value: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub floor: f64,
}

/// `kappa(Z^T Z)` evaluated entrywise.
pub fn filter_gram(filters: &DMatrix<f64>, cfg: &KernelConfig) -> DMatrix<f64> {
    let mut g = filters.transpose() * filters;
    g.apply(|v| *v = cfg.eval(*v).0);
    g
}

/// `kappa(Z^T Z)^{-1/2}` by symmetric eigendecomposition with eigenvalues
/// floored at `cfg.eigen_floor`.
pub fn inv_sqrt_kernel(filters: &DMatrix<f64>, cfg: &KernelConfig) -> Result<InvSqrt> {
    if filters.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite filter entries".into()));
    }
    let gram = filter_gram(filters, cfg);
    let eig = SymmetricEigen::new(gram);
    let vecs = eig.eigenvectors;
    let vals = eig.eigenvalues;
    let scale = DVector::from_iterator(vals.len(), vals.iter().map(|&l| l.max(cfg.eigen_floor).powf(-0.5)));
    let value = &vecs * DMatrix::from_diagonal(&scale) * vecs.transpose();
    // symmetrize away rounding
    let value = (&value + value.transpose()) * 0.5;
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("inverse square root is not finite".into()));
    }
    Ok(InvSqrt { value, eigenvalues: vals, eigenvectors: vecs, floor: cfg.eigen_floor })
}

impl InvSqrt {
    /// Pull a gradient with respect to the inverse square root back to the
    /// kernel matrix it was computed from (Daleckii-Krein formula).
    pub fn backward(&self, grad: &DMatrix<f64>) -> DMatrix<f64> {
        let f = |l: f64| l.max(self.floor).powf(-0.5);
        let df = |l: f64| if l > self.floor { -0.5 * l.powf(-1.5) } else { 0.0 };
        let vals = &self.eigenvalues;
        let v = &self.eigenvectors;
        let p = vals.len();
        let mut inner = v.transpose() * grad * v;
        for i in 0..p {
            for j in 0..p {
                let (li, lj) = (vals[i], vals[j]);
                let gap = li - lj;
                let coef = if gap.abs() > 1e-10 * (1.0 + li.abs().max(lj.abs())) {
                    (f(li) - f(lj)) / gap
                } else {
                    df(0.5 * (li + lj))
                };
                inner[(i, j)] *= coef;
            }
        }
        v * inner * v.transpose()
    }
}

/// One convolutional kernel layer: unit-norm filters, cached
/// `kappa(Z^T Z)^{-1/2}`, and pooling parameters.
#[derive(Clone, Debug)]
pub struct CknLayer {
    pub patch_h: usize,
    pub patch_w: usize,
    pub in_channels: usize,
    /// One filter per column, `in_channels * patch_h * patch_w` rows.
    pub filters: DMatrix<f64>,
    pub inv_sqrt: InvSqrt,
    pub pool_beta: f64,
    pub subsample: usize,
    pub kernel: KernelConfig,
}

impl CknLayer {
    pub fn new(
        patch_h: usize,
        patch_w: usize,
        in_channels: usize,
        filters: DMatrix<f64>,
        pool_beta: f64,
        subsample: usize,
        kernel: KernelConfig,
    ) -> Result<Self> {
        kernel.validate()?;
        if filters.nrows() != in_channels * patch_h * patch_w {
            return Err(Error::Dimension(format!(
                "filters have {} rows, expected {}",
                filters.nrows(),
                in_channels * patch_h * patch_w
            )));
        }
        if filters.ncols() == 0 {
            return Err(Error::Config("layer needs at least one filter".into()));
        }
        if !(pool_beta > 0.0) || subsample == 0 {
            return Err(Error::Config("pool_beta must be positive and subsample >= 1".into()));
        }
        let filters = normalize_columns(filters)?;
        let inv_sqrt = inv_sqrt_kernel(&filters, &kernel)?;
        Ok(Self { patch_h, patch_w, in_channels, filters, inv_sqrt, pool_beta, subsample, kernel })
    }

    pub fn n_filters(&self) -> usize {
        self.filters.ncols()
    }

    pub fn patch_dim(&self) -> usize {
        self.filters.nrows()
    }

    /// Replace the filters, projecting each column back onto the unit sphere
    /// and recomputing the cached inverse square root.
    pub fn set_filters(&mut self, filters: DMatrix<f64>) -> Result<()> {
        let filters = normalize_columns(filters)?;
        self.inv_sqrt = inv_sqrt_kernel(&filters, &self.kernel)?;
        self.filters = filters;
        Ok(())
    }
}

pub(crate) fn normalize_columns(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for (j, mut c) in m.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numeric(format!("filter {j} has zero or non-finite norm")));
        }
        c /= n;
    }
    Ok(m)
}

/// Nystrom feature `||x|| kappa(Z^T Z)^{-1/2} kappa(Z^T x / ||x||)`, zero for
/// a zero patch.
pub fn nystrom_project(x: &[f64], layer: &CknLayer) -> Vec<f64> {
    assert_eq!(x.len(), layer.patch_dim(), "patch length does not match filters");
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; layer.n_filters()];
    }
    let u = DVector::from_iterator(x.len(), x.iter().map(|v| v / norm));
    let mut s = layer.filters.transpose() * u;
    s.apply(|v| *v = layer.kernel.eval(*v).0);
    let out = &layer.inv_sqrt.value * s * norm;
    out.iter().copied().collect()
}
