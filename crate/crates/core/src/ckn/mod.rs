//! Convolutional kernel networks: patch extraction, the Nystrom
//! parametrization of the dot-product kernel on the sphere, Gaussian pooling,
//! multilayer forward/backward passes, and unsupervised initialization by
//! spherical K-means.

mod feature_map;
pub mod io;
mod kernel;
pub mod kmeans;
mod layer;
mod network;
pub mod patches;
pub mod pool;

pub use feature_map::FeatureMap;
pub use kernel::{kappa, KernelConfig};
pub use kmeans::spherical_kmeans;
pub use layer::{filter_gram, inv_sqrt_kernel, nystrom_project, CknLayer, InvSqrt};
pub use network::{
    ckn_backward, ckn_features, ckn_forward, unsupervised_init, CknGradients, CknModel, ForwardCache,
    InvSqrtMode, LayerCache, LayerSpec,
};
pub use patches::extract_patches;
pub use pool::gaussian_pool;
