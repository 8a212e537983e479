//! Approximate data communication over silicon-photonic networks-on-chip.
//!
//! The crate models the optical link budget of a photonic NoC, decides per
//! packet whether approximable bits are truncated or sent at reduced laser
//! power, applies crosstalk-mitigation encoding and microring tuning, and
//! accounts the resulting energy in a trace-driven simulator. A small set of
//! synthetic kernels measures the output-quality cost of the approximation.

pub mod approx;
pub mod codec;
pub mod kv;
pub mod photonics;
pub mod quality;
pub mod sim;
pub mod topology;
pub mod tracegen;
pub mod tuning;
