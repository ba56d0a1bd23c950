//! Cost-aware opinion dynamics with repulsive fusion, discounted LQR control
//! and isolation of malicious agents.

pub mod costs;
pub mod error;
pub mod fusion;
pub mod harness;
mod linalg;
pub mod network;
pub mod riccati;
pub mod scheduler;

pub use error::{Error, Result};
