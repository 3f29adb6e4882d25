//! Decremental federated learning simulator.
//!
//! The crate is split along the layers of the system:
//!
//! - [`models`]: exact incremental/decremental learners (item co-occurrence
//!   similarity, Tikhonov-regularized regression backed by a rank-one QR
//!   update, multinomial naive Bayes) with operation-count instrumentation.
//! - [`bandit`]: UCB-style worker selection with minimum-selection-fraction
//!   virtual queues.
//! - [`energy`]: simulated DVFS state machine, energy and training-time
//!   models, and the θ-LRU page cache.
//! - [`federation`]: round orchestration with TTL / majority aggregation.
//! - [`privacy`]: recovery of deleted data from stale similarity models.
//! - [`data`]: dataset parsing, binarization and sharding.

// Range checks are written `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod data;
pub mod energy;
pub mod error;
pub mod federation;
pub mod models;
pub mod privacy;

pub use error::{ConfigError, DataError, FederationError, ModelError};
