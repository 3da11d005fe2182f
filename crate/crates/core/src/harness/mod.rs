//! Dataset handling, training, model selection, evaluation and ablations.

mod ablation;
mod checkpoint;
mod dataset;
pub mod io;
mod split;
mod train;

pub use ablation::{run_ablation, AblationRow};
pub use checkpoint::ModelCheckpoint;
pub use dataset::{image_to_input, load_manifest, synthetic_dataset, Dataset, Sample, SyntheticSpec};
pub use split::{split_dataset, SplitSpec, MIN_SPLIT_SIZE};
pub use train::{evaluate, lr_at, predict_dataset, select_best, train, BestTracker, EpochRecord, Evaluation, StatsMode, TrainConfig, TrainEnv, TrainOutcome};
