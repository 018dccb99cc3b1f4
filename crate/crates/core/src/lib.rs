//! Fully-connected deep continuous conditional random fields.
//!
//! A scene is over-segmented into superpixel nodes ([`graph`]). A unary network
//! predicts per-node scores `Z` and a pairwise network produces a dense Gaussian
//! affinity matrix `R` ([`networks`]). MAP inference is the closed-form solve
//! `(I + D - R) Yhat = Z` ([`crf`]), so the whole model can be trained end to end
//! either by maximum likelihood or against a task-specific loss evaluated on the
//! MAP estimate ([`losses`], [`training`]).

pub mod ablation;
pub mod cli;
pub mod config;
pub mod crf;
pub mod data;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod networks;
pub mod plot;
pub mod slic;
pub mod training;

pub use error::{Error, Result};
