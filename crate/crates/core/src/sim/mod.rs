//! Trace-driven simulation of approximate transmission and its energy.

pub mod config;
mod engine;
pub mod packet;
pub mod report;
pub mod trace;

pub use config::{RunConfig, StaticPower, Variant};
pub use engine::{run, transmit_flit, EnergyLedger, FlitMasks, FlitTransmission, LinkContext, SimError};
pub use report::{compare, CompareError, ComparisonRow, ComparisonTable, Diagnostics, SimReport};
pub use trace::{Trace, TraceError, TraceRecord};

#[cfg(test)]
mod tests;
