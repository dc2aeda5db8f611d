//! Neural estimation stack: a minimal reverse-mode autodiff substrate, the
//! CVAE qualifier completer, the qualifier-aware GNN cardinality estimator,
//! and the training / evaluation pipeline.

pub mod augment;
pub mod cvae;
pub mod embed;
pub mod error;
pub mod gradcheck;
pub mod hrqe;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{NeuralError, Result};
pub use params::ParamStore;
pub use tape::{Tape, ValueId};
pub use tensor::{Shape, Tensor};
