//! A two-stage learned range index with access-aware training.
//!
//! The crate is split along the life cycle of an index:
//!
//! - [`models`]: closed-form linear regression and a small multilayer
//!   perceptron trained by mini-batch gradient descent.
//! - [`index`]: the staged index itself. A root model routes a key to one of
//!   `M` linear leaves, each leaf carries a signed error window, and lookups
//!   finish with a binary search inside that window.
//! - [`workload`]: reproducible datasets, read workloads and access histograms.
//! - [`augment`]: frequency-aware training sets (duplication and stretching)
//!   and the finalizer that restores exact positions in the leaves.
//! - [`counselor`]: distribution sketches, the persistent model cache,
//!   fine-tuning of cached models and grid-search auto-tuning.

pub mod augment;
pub mod counselor;
pub mod error;
pub mod index;
pub mod models;
pub mod workload;

pub use error::{Error, Result};
pub use index::{LeafModel, SortedDataset, StagedIndex, TrainingPair};
pub use models::{LinearModel, ModelArch, NeuralNet, RootModel, TrainConfig};
