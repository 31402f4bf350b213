//! Simulation and analysis of device-independent quantum private query.
//!
//! Bob certifies an untrusted entangled-pair source with a local CHSH game
//! played on a random subset of the pairs, then uses the rest for a
//! B92-style private query with Alice. The crate provides:
//!
//! * [`quantum`]: exact two-qubit pure states, measurement bases, Born-rule
//!   sampling and the (possibly skewed) source model;
//! * [`analytics`]: closed-form probabilities used as oracles;
//! * [`chsh`]: the local CHSH test and its abort decision;
//! * [`qpq`]: key generation, dilution, the private query and full protocol
//!   runs, including a dishonest Alice who biases her basis choice;
//! * [`bounds`]: the finite-sample deviations δ and ν and empirical tail
//!   harnesses;
//! * [`verify`]: a self-check suite comparing simulation against the
//!   closed forms.
//!
//! All randomness flows from a [`StreamKey`]; equal keys give bit-identical
//! results regardless of thread count.

pub mod analytics;
pub mod bits;
pub mod bounds;
pub mod chsh;
pub mod cli;
pub mod error;
pub mod qpq;
pub mod quantum;
pub mod rng;
pub mod verify;

pub use bits::Bits;
pub use error::{Error, Result};
pub use rng::StreamKey;
