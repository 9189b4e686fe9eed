//! Core numerics for covariance-pooled networks over SPD matrices:
//! dense tensors, a deterministic symmetric eigensolver, SPD layers with
//! analytic backward passes, Stiefel-manifold optimization, a small CNN
//! frontend, and the assembled classifier models.

pub mod eig;
pub mod error;
pub mod frontend;
pub mod models;
pub mod nn;
pub mod numdiff;
pub mod rng;
pub mod spd;
pub mod stiefel;
pub mod tensor;

pub use error::{CoreError, Result};
pub use tensor::{frobenius_inner, sym_part, Scalar, Tensor};
