//! Simulator and analysis toolkit for secret sharing of zero over a linear
//! quantum network.
//!
//! A chain of `J` players shares single-qubit states: player 1 prepares,
//! the middle players rotate, player `J` measures (or, in the
//! entanglement-based variant, everyone measures a share of a GHZ-type
//! state). Classical post-processing then turns the correlated outcomes into
//! `K`-bit strings whose XOR is zero.

pub mod adversary;
pub mod applications;
pub mod bits;
pub mod channel;
pub mod coding;
pub mod harness;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod security;

pub use bits::Bits;
pub use channel::PlayerId;
