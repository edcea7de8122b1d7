//! Layer-grafted self-supervised pre-training laboratory.

pub mod checkpoint;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod objectives;
pub mod regimes;
pub mod rng;
pub mod tensor;
#[doc(hidden)]
pub mod testing;
pub mod vit;

pub use error::{Error, Result};
pub use tensor::{Element, NamedParamStore, Tensor};
