//! Geometry of sigmoid-loss representation synchronization.
//!
//! Paired unit embeddings `(U_i, V_i)` reach zero sigmoid loss exactly when
//! they form an `(m, b_rel)`-constellation: every positive inner product is
//! at least `b_rel + m` and every negative one at most `b_rel - m`. This crate
//! provides the data types, losses, explicit constructions, feasibility and
//! cardinality bounds, a sphere-constrained Adam trainer, modality-gap
//! certificates and retrieval diagnostics built around that object.

pub mod bounds;
pub mod constructions;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod optimizer;
pub mod par;
pub mod retrieval;
pub mod separation;

pub use error::{Error, Result};
pub use geometry::{ConstellationParams, EmbeddingSet, GramStats, PairedConfig};
