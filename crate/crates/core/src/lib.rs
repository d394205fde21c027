//! Sub-resolution radar range analysis with bottleneck autoencoders.
//!
//! Bandlimited outgoing pulses ([`pulses`]) illuminate two equal point
//! scatterers ([`scene`]); autoencoders with a one-neuron bottleneck
//! ([`model`], built on the small [`nn`] engine) are trained on the returns
//! ([`train`]) and their bottleneck response to scatterer separation is
//! analysed ([`analysis`]). [`experiment`] wires everything into
//! reproducible runs.

pub mod analysis;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod pulses;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
