//! Matrix-free solver for very large structured linear systems `A u = b`.
//!
//! The unknown vector is represented by a small fully-connected ReLU
//! network evaluated at the points of a tensor grid, and the network
//! weights are fitted by mini-batch gradient descent on the system
//! residual. Matrices and right-hand sides are never stored: they are
//! accessed one row at a time through [`operator::RowOracle`].
//!
//! Module map:
//!
//! * [`grid`]: tensor grids, multi-index and flat-index arithmetic, sampling.
//! * [`fnn`]: the ReLU network, its initialization and hand-written gradients.
//! * [`operator`]: row oracles for the structured matrices.
//! * [`problems`]: the four experiment families.
//! * [`solver`]: losses, gradient assembly and the training loop.
//! * [`eval`]: test-set metrics, the residual error bound, slices.
//! * [`oracle`]: dense brute-force references for small instances.
//! * [`verify`]: the self-check suite built on [`oracle`].

pub mod error;
pub mod eval;
pub mod fnn;
pub mod grid;
pub mod operator;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
