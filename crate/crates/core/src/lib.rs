//! Finite-blocklength simulation of resource conversion protocols on small
//! quantum systems.
//!
//! The library builds the machinery needed to run four protocols that turn a
//! noisy quantum resource (a channel, or many copies of a bipartite state)
//! into a noiseless private or quantum one (secret key, or ebits), all driven
//! by the same classical-quantum-quantum source `{P(x), |φ_x⟩^{BE}}`:
//!
//! - secret key generation over a channel,
//! - secret key distillation from shared states,
//! - entanglement generation over a channel,
//! - entanglement distillation from shared states (plus an entanglement
//!   transmission variant).
//!
//! The crate is organised bottom-up:
//!
//! - [`qmath`]: dense complex linear algebra on multi-register systems
//!   (tensor products, partial traces, spectral decompositions, trace
//!   distance / fidelity, purification, Uhlmann alignment).
//! - [`channels`]: quantum channels with Stinespring dilations and a small
//!   library of standard channels and states.
//! - [`source`]: the cqq source, tripartite pure states, target resources
//!   and protocol parameters.
//! - [`entropy`]: entropic functionals (von Neumann, Shannon, conditional,
//!   mutual, Holevo, coherent information) in bits.
//! - [`typicality`]: typical sets, typical subspaces and conditionally
//!   typical subspaces with their dimension/support bounds.
//! - [`codes`]: random code constructions — HSW codes with pretty-good
//!   measurement decoding, privacy amplification sets, partitioned
//!   key-generation codes, coverings, quantum codes and Alice's instrument.
//! - [`protocols`]: the end-to-end engines and their figures of merit.
//! - [`optimize`]: derivative-free maximisation of coherent information over
//!   parameterized channel inputs.
//!
//! All logarithms are base 2 and all entropic quantities are in bits. All
//! state/operator values are immutable after construction and every public
//! operation is a pure function, so concurrent evaluation is safe. Dense
//! storage only: the intended scale is block length `n ≤ 8` over qubit-sized
//! registers.

pub mod channels;
pub mod codes;
pub mod entropy;
pub mod error;
pub mod optimize;
pub mod protocols;
pub mod qmath;
pub mod rng;
pub mod source;
pub mod typicality;

pub use error::{Error, Result};
