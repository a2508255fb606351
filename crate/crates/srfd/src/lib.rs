//! Seismic-response decoder: a small decoder-only transformer that predicts
//! story displacement and acceleration windows from ground motion, past
//! response and a simplified-model response, conditioned on story mass and
//! stiffness. Every operation has a hand-written reverse pass.

pub mod attention;
pub mod checkpoint;
mod error;
pub mod ffn;
pub mod linear;
mod matrix;
pub mod model;
pub mod ops;
mod scalar;

pub use checkpoint::{sha256_hex, AdapterCheckpoint, Checkpoint};
pub use error::{Error, Result};
pub use linear::{lora_apply, Linear, LoraAdapter};
pub use matrix::Matrix;
pub use model::{
    backward, forward, forward_with_tape, Gradients, ParamKind, SrfdConfig, SrfdWeights, StepInputs, Tape, N_QUANTITIES,
};
pub use scalar::Scalar;
