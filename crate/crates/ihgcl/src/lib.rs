//! Intent-guided recommendation over heterogeneous graphs.
//!
//! The model propagates user/item embeddings over the interaction bipartite
//! graph, distills intent signals from meta-path subgraphs with a masked
//! autoencoder whose edge retention is learned under an information
//! bottleneck, aligns the resulting views with contrastive losses, and ranks
//! with a pairwise objective. See the `guide` module (rendered from the
//! `book/` directory) for a chapter-by-chapter walkthrough.

pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
