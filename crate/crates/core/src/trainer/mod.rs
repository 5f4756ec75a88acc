//! Struct-CKN training: CKN features, feature scaling, structured predictor
//! epochs, and backpropagation of the structured loss into the CKN filters
//! and the optional embedding.

mod embedding;
mod model;
mod scaler;
mod train;

pub use embedding::{CategoricalMap, Embedding, EmbeddingField};
pub use model::{
    sigmoid, AuxHeads, AuxTargets, NodeInput, Prediction, StructCknModel, StructExample, Template,
    MODEL_FORMAT_VERSION,
};
pub use scaler::{Scaler, ScalerKind};
pub use train::{
    batch_train_struct_ckn, node_error_rate, predict_all, train_struct_ckn, CknConfig, EmbeddingConfig,
    OptimizerConfig, OptimizerKind, TrainConfig,
};
