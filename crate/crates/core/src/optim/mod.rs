//! Structured learners: SDCA for CRFs with gap-driven sampling and an
//! exact line search, BCFW for structural SVMs, and the training log.

mod bcfw;
mod linesearch;
mod log;
mod oracle;
mod sdca;

pub use self::log::{TrainLog, TrainLogRow};
pub use bcfw::{hamming, BcfwConfig, BcfwState};
pub use linesearch::{newton_linesearch, LineSearch};
pub use oracle::{feasible_uniform, peaked_for_model, MarginalOracle};
pub use sdca::{conjugate_weights, SdcaConfig, SdcaState, StepInfo};
