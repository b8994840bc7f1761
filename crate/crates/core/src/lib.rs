//! Compact convolutional networks for facial emotion and valence/arousal
//! prediction, with the training, evaluation, serialization and
//! music-recommendation plumbing around them.

pub mod arch;
pub mod bench;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod recommender;
pub mod rng;
pub mod service;
pub mod tensor;
pub mod training;

pub use arch::{ArchId, Head, Model, ModelGraph};
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{Scalar, Tensor};
