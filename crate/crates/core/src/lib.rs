//! Federated edge learning over bandwidth-limited fading wireless channels.
//!
//! The parameter server (PS) shares its global model with `M` devices over a
//! fading broadcast channel, each device runs `τ` local SGD steps, and the
//! local updates are aggregated over the air on a fading multiple access
//! channel. Two downlink schemes are provided:
//!
//! * **digital**: top-`s` sparsification plus stochastic quantization of the
//!   model drift, sent at the water-filled common rate of the broadcast
//!   channel ([`compression`], [`capacity`], [`downlink::digital_broadcast`]);
//! * **analog**: uncoded broadcast of the model, descaled by each device with
//!   its own channel inversion ([`downlink::analog_broadcast`]).
//!
//! The uplink is always analog ([`uplink`]). [`bound`] evaluates the
//! convergence-bound recursion of the analog downlink scheme, and [`sim`]
//! composes everything into reproducible experiments driven by a flat
//! key-value [`config`].

pub mod bound;
pub mod capacity;
pub mod channel;
pub mod compression;
pub mod config;
pub mod downlink;
mod error;
pub mod learner;
pub mod rng;
pub mod sim;
pub mod uplink;

pub use error::{Error, Result};

/// Flat real parameter vector `θ` of length `d`.
pub type ModelVector = Vec<f64>;
