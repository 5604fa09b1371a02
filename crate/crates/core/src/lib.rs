//! Failure cascades driven by threshold load redistribution on regular
//! networks.
//!
//! Each agent carries a load `phi` and a capacity `theta`; it fails once
//! `phi >= theta` and then hands its load in equal shares to `K` neighbors.
//! The crate provides:
//!
//! * [`topology`]: paper tree, square lattice and random regular networks
//!   with their shell structure `K(t)` around the shocked agent,
//! * [`thresholds`]: delta, uniform and power-law capacity distributions and
//!   the network capacity `Q`,
//! * [`engine`]: the synchronous cascade simulator and its trace,
//! * [`analytic`]: closed-form critical thresholds, failure fractions, stop
//!   times and systemic-risk predictions,
//! * [`experiments`]: replica ensembles, parameter sweeps, figure presets
//!   and simulation-vs-theory residuals.

pub mod analytic;
pub mod engine;
pub mod experiments;
pub mod rng;
pub mod thresholds;
pub mod topology;

pub use analytic::{AnalyticPrediction, FormulaVariant, ModelParams, Regime};
pub use engine::{CascadeConfig, CascadeState, CascadeTrace, Shock, StopReason};
pub use experiments::{SweepGrid, SweepRecord};
pub use thresholds::{ThresholdDistribution, ThresholdSample};
pub use topology::{Network, TopologyKind, TopologySpec};
