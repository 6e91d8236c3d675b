//! Political-affiliation discovery from like propagation: heuristic user
//! labeling, corpus construction, a linear text classifier with per-user
//! aggregation, and the evaluation protocols around them.

pub mod agreement;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod labeler;
pub mod party;
pub mod pipeline;
pub mod seed;
pub mod seeds;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use party::{Party, PartyLabel, Tally, N_PARTIES};
