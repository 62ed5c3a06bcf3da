//! Per-annotator perspective modelling: corpus handling, socio-demographic
//! features, batching, models, contrastive objectives, training, evaluation,
//! homophily analysis and synthetic data.

pub mod batcher;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod homophily;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
