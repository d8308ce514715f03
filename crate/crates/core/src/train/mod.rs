//! Model assembly, optimization, checkpoints, datasets and scoring.

mod checkpoint;
mod config;
mod dataset;
mod model;
mod optim;
mod per;
pub mod synth;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Config, InitName, TIMIT_61, EarlyStopMetric, LossReduction, ModelConfig, TrainConfig};
pub use dataset::{extract_manifest, load_dataset, load_features, parse_manifest, read_manifest, write_manifest, Dataset, ManifestEntry, Utterance};
pub use model::{real_equivalent_param_count, LayerInfo, Model};
pub use optim::{l2_penalty, AdamSettings, OptimizerKind, OptimizerState};
pub use per::{edit_distance, per, PerStats, PhoneMap};
pub use trainer::{decode, evaluate, EpochRecord, EvalReport, Phase, Trainer};
