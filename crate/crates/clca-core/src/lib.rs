//! Discrete-time simulator and scheduler library for cross-layer control of
//! heterogeneously powered wireless sensor networks.
//!
//! The library implements a drift-plus-penalty scheduler (referred to as CLCA
//! throughout) that jointly decides, once per slot:
//!
//! * source admission and an auxiliary virtual input rate,
//! * packet dropping,
//! * back-pressure session selection and link activation,
//! * transmit power via a log-domain block coordinate ascent,
//! * energy harvesting and grid purchases against a perturbed battery target.
//!
//! Alongside the scheduler there is a verification layer that re-checks the
//! analytical guarantees (deterministic queue bounds, worst-case FIFO delay,
//! energy availability) on every simulated slot, an opportunistic baseline
//! scheduler for comparison, and a deterministic sweep harness.
//!
//! Modules mirror the moving parts: [`model`] (static network description and
//! derived bounds), [`env`] (per-slot randomness), [`queues`] (queue state and
//! FIFO ledgers), [`power`] (SINR and the power solver), [`scheduler`] (the
//! per-slot control loop), [`baseline`] (the comparison policy), [`metrics`]
//! (objective, reports, verdicts) and [`harness`] (sweep orchestration).

pub mod baseline;
pub mod config;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod power;
pub mod queues;
pub mod scheduler;

pub use config::RawConfig;
pub use model::NetworkModel;
