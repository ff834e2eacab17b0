//! First-level quantum repeater simulation with entanglement purification
//! and an optimized memory buffer time.
//!
//! The crate is layered bottom-up:
//!
//! - [`states`]: dephased and Werner Bell-diagonal states and memory decay
//! - [`ops`]: closed forms for generation, swapping and purification
//! - [`oracle`]: exact density-matrix circuits used to check the closed forms
//! - [`verification`]: the formula-vs-circuit comparison grid
//! - [`protocol`]: the time-stepped Monte Carlo engine for one buffer window
//! - [`metrics`]: Rains bound, distribution rate, buffer optimization

pub mod error;
pub mod metrics;
pub mod ops;
pub mod oracle;
pub mod protocol;
pub mod states;
pub mod verification;

pub use error::{Error, Result};
pub use ops::{GenerationParams, OperationNoise, PurifyResult};
pub use states::{MemoryQuality, NoisyBellState, StateFamily};
