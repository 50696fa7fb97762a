//! Neural attention forests.
//!
//! A fitted tree ensemble supplies, for any query, the training rows sharing
//! each tree's leaf. Two small embedding networks turn those memberships
//! into attention weights: one over the rows inside each leaf, one over the
//! trees. Both are trained end to end by gradient descent.

pub mod attention_net;
pub mod dataset;
pub mod error;
pub mod eval_explain;
pub mod forest;
pub mod naf_model;
pub mod par;
pub mod persist;
pub mod rng;
pub mod training;

pub use attention_net::{Architecture, AttentionNet};
pub use dataset::{Dataset, Standardizer, SyntheticKind};
pub use error::{NafError, Result};
pub use forest::{build_forest, Forest, ForestConfig, ForestKind};
pub use naf_model::{KeyMode, NafConfig, NafModel, NafOutput};
pub use persist::{load_model, save_model, TrainingMeta};
pub use training::{train, Objective, TrainConfig, TrainReport};
