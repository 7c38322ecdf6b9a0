//! Analog joint source-channel coding with curves on flat tori.
//!
//! A scalar source symbol is mapped onto a closed (or, for odd dimension,
//! helical) curve, sent over an AWGN channel and decoded by a MAP search,
//! by torus projection, by the amplitude-marginalized angle likelihood or by
//! a small neural network.

pub mod bounds;
pub mod codec;
pub mod curve;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod numeric;
pub mod profile;
pub mod spsa;
pub mod tube;

pub use codec::{ChannelSpec, FeatureMode, FeatureVector, MapDecoder};
pub use curve::{CurvatureVector, FrenetFrame};
pub use error::{Error, Result};
pub use profile::{CodeProfile, Stretch};
pub use spsa::{OptimizationTrace, SpsaConfig};
pub use tube::TubeMetrics;
