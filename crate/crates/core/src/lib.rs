//! Multi-agent portfolio construction: a population of heterogeneous investor
//! agents picks stocks every day, their picks are aggregated into a
//! consensus-minus-disagreement signal, and the weighting of agent types is
//! re-fitted daily against recently realized returns.

mod error;

pub mod aggregation;
pub mod backtest;
pub mod agents;
pub mod dataset;
pub mod engine;
pub mod gateway;
pub mod metrics;
pub mod optimizer;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
