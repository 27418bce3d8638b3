//! Label propagation for object-segment embeddings.
//!
//! Class labels are assigned to crop embeddings by a banked Hopfield-memory
//! head per embedding space, optionally averaged across spaces by an
//! [`ensemble::EnsemblePredictor`]. A cosine nearest-prototype baseline,
//! crop-level evaluation metrics and an annotation-time savings model round
//! out the pipeline.

pub mod cosine;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod hopfield;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod savings;
pub mod scores;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use scores::ScoreVector;
