//! Core toolkit for cardinality estimation over hyper-relational knowledge
//! graphs (HKGs): fact store with qualifier indices, conjunctive query model,
//! exact cardinality engines, a random-walk estimator, and a labeled
//! workload generator.

pub mod brute;
pub mod error;
pub mod exact;
pub mod hkg;
pub mod query;
pub mod sampling;
pub mod skeleton;
pub mod synth;
pub mod workload;

pub use error::{CoreError, Result};
pub use hkg::{EntityId, Fact, FactId, Hkg, HkgStats, RelationId};
pub use query::{FactPattern, PatternClass, Query, Term};
