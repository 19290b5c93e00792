//! Secure cell-free massive MIMO downlink under an active pilot-spoofing
//! eavesdropper.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] draws network realizations (geometry, path loss and
//!   spatially correlated shadowing on a wrapped-around square).
//! * [`channel`] turns a realization into MMSE estimation statistics under the
//!   pilot attack, the protective partial zero-forcing user grouping, and the
//!   closed-form SINRs of the users and the eavesdropper.
//! * [`montecarlo`] (feature `montecarlo`) realizes the small-scale channels and
//!   precoders explicitly and estimates the same SINRs empirically.
//! * [`optimizer`] minimizes the eavesdropper rate over power control and
//!   relaxed AP association with a penalized, non-monotone accelerated
//!   projected gradient method.
//! * [`experiment`] runs paired Monte-Carlo campaigns over baseline and joint
//!   schemes and reduces them to CDFs and averages.
//! * [`validation`] compares the gradient, projection and SINRs against
//!   independent reference computations.
//! * [`cli`] holds the configuration schema and the command implementations
//!   behind the `cfsec` binary.

pub mod channel;
pub mod cli;
mod error;
pub mod experiment;
pub mod format;
#[cfg(feature = "montecarlo")]
pub mod montecarlo;
pub mod optimizer;
pub mod rng;
pub mod scenario;
pub mod validation;

pub use channel::{estimate_gains, secrecy_se, sinr_eve, sinr_user, ChannelStats, GroupingRule, PowerMatrix};
pub use error::{Error, Result};
pub use experiment::{cdf, run_scheme, sweep_re, ExperimentResult, SchemeKind, SchemeSpec};
pub use optimizer::{apg_solve, project, round_and_polish, ApgParams, DecisionVars, PenaltyWeights};
pub use scenario::{generate_scenario, wrap_distance, NetworkConfig, Point, Scenario};
