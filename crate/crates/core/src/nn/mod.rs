//! Dense-network substrate: parameters, activations, a reverse-mode tape and Adam.

pub mod activations;
pub mod adam;
pub mod param;
pub mod tape;

pub use activations::Activation;
pub use adam::{AdamConfig, AdamState};
pub use param::{ParamId, ParamStore, ParamTensor};
pub use tape::{RowMix, Tape, Var};
