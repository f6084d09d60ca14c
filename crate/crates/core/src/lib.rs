//! Zero-shot domain adaptation over a multiway grid of domains.
//!
//! Every domain shares a representation `φ` and owns a linear head `w_t`; the
//! heads of all `D = Π d_m` domains form a tensor whose coordinate slices have
//! CP rank at most `K`. Heads for domains without training data are obtained
//! either by completing the tensor of heads learned on the seen domains or by
//! training the factorized heads end to end.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod completion;
pub mod data;
pub mod datagen;
pub mod cp;
pub mod error;
pub mod eval;
pub mod grid;
mod linalg;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod mask;
pub mod rng;

pub use bounds::{bound_diagnostic, completion_generalization_term, pdim_bound, BoundDiagnostic, BoundParams};
pub use completion::{complete, CompletionConfig, CompletionResult};
pub use cp::{additive_to_cp, CPFactors, HeadTensor};
pub use error::{Error, Result};
pub use grid::{DomainGrid, MultiIndex};
pub use mask::{diagonal_mask, sample_mask, ObservationMask};
