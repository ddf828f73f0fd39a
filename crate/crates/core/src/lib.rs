//! Sparse-training primitives that run without the standard library.
//!
//! The crate covers the full numerical side of the toolkit:
//!
//! * [`autodiff`]: a symbolic reverse-mode differentiation record over dense
//!   tensors, with gradients and exact Hessian-vector products,
//! * [`network`]: maskable multi-layer perceptrons, parameter accounting,
//!   structured neuron trimming and low-rank layer compression,
//! * [`saliency`]: magnitude, SNIP and GraSP scores plus top-k masking,
//! * [`train`]: the training loop and every pruning procedure built on it
//!   (UMP, IMP, PARP, SNIP, GraSP, Sparse Momentum, RigL),
//! * [`sizing`]: dense and sparse storage estimates,
//! * [`data`]: seeded synthetic tasks with an 80:10:10 split.
//!
//! Everything is deterministic given a seed. IO, configuration files and the
//! command line live in the `sparsetrain` companion crate.

#![no_std]
#![forbid(unsafe_code)]

// Modules import `num_traits::Float` for f64 math under `#[allow(unused_imports)]`:
// the import is needed without std but redundant once std is linked in.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod fraction;
pub mod network;
pub mod saliency;
pub mod scalar;
pub mod seed;
pub mod sizing;
pub mod tensor;
pub mod train;

pub use self::error::{Error, Result};
pub use self::fraction::Fraction;
pub use self::scalar::Scalar;
pub use self::tensor::Tensor;
