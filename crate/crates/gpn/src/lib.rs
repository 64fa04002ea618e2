//! Graph policy network for multicast routing.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod policy;
pub mod train;

pub use config::{Aggregator, Encoder, ModelConfig, Reencode, Scorer, VARIANTS};
pub use error::{GpnError, Result};
pub use features::{node_features, FeatureSpec, FEATURE_DIM};
pub use params::ModelParams;
pub use policy::{run_policy, solve, GpnPolicy, RecordingPolicy};
pub use checkpoint::Checkpoint;
pub use train::{train, train_from, MetricsRow, TrainConfig, TrainOutcome, Validator};
