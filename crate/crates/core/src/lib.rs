//! Partition-consistency laboratory: computations, consistency checkers,
//! a deterministic network simulator, partial-order broadcast runtimes and
//! the transformation from shared-memory programs onto them.

pub mod checker;
pub mod computation;
pub mod error;
pub mod litmus;
pub mod monitor;
pub mod order;
pub mod partition;
pub mod pob;
pub mod sim;
pub mod text;
pub mod transform;

pub use error::{Error, Result};
