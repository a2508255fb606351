//! Data and learning side of seisforge: dataset generation from simulated
//! building responses, windowed training of the response decoder, free-running
//! rollout, evaluation and adapter fine-tuning.

pub mod config;
pub mod dataset;
mod error;
pub mod metrics;
pub mod optim;
pub mod predict;
pub mod train;
pub mod windows;

pub use config::{FinetuneConfig, GenConfig, OptimConfig, TrainConfig};
pub use dataset::{build_dataset, Dataset, DatasetManifest, Split, TrainingSample};
pub use error::{Error, Result};
pub use metrics::{EvalReport, Metrics};
pub use predict::{evaluate, predict_rollout, Predictor};
pub use train::{finetune_lora, train, TrainLog, TrainOutcome};
pub use windows::{make_windows, NormStats};
