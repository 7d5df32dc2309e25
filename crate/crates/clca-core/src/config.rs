//! On-disk configuration schema.
//!
//! A configuration file is a single JSON document with four required sections
//! (`nodes`, `links`, `sessions`, `params`) and an optional `sweep` section.
//! Parsing is strict serde; semantic validation lives in [`crate::model`].

use serde::{Deserialize, Serialize};

/// Power provisioning class of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerClass {
    /// Energy harvesting only (no grid connection).
    #[serde(rename = "EH")]
    Harvest,
    /// Grid powered only (no harvester).
    #[serde(rename = "EG")]
    Grid,
    /// Mixed: both a harvester and a grid connection.
    #[serde(rename = "ME")]
    Mixed,
}

impl PowerClass {
    pub fn harvests(self) -> bool {
        matches!(self, PowerClass::Harvest | PowerClass::Mixed)
    }

    pub fn grid_connected(self) -> bool {
        matches!(self, PowerClass::Grid | PowerClass::Mixed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: String,
    pub power_class: PowerClass,
    /// Planar coordinates used to derive link distances and path loss.
    pub position: [f64; 2],
    /// Per-slot transmit power budget `P_max`.
    pub p_max: f64,
    /// Energy spent per received packet.
    pub p_recv_unit: f64,
    /// Per-slot grid purchase cap; must be 0 for harvest-only nodes.
    pub g_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub from: String,
    pub to: String,
    /// Frequency channel index; links sharing a channel interfere.
    pub channel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSession {
    pub id: String,
    pub source: String,
    pub sink: String,
    /// Utility weight of the session, `U(x) = beta * ln(1 + x)`.
    pub beta: f64,
    /// Per-slot increment of the virtual delay queue.
    pub epsilon: f64,
    /// Energy spent per sensed (admitted) packet at the source.
    pub p_sense_unit: f64,
}

/// Global scalar parameters. Every scalar has a named key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    /// Utility weight of the drift-plus-penalty trade-off.
    pub v: f64,
    /// Weight of the network utility/drop terms in the objective.
    pub omega1: f64,
    /// Weight of the energy cost term in the objective.
    pub omega2: f64,
    /// Data-to-delay queue coupling ratio used by the delay queue switch.
    pub rho: f64,
    /// Capacity-per-power slope bound used by the battery perturbation.
    pub delta: f64,
    /// Receiver noise power.
    pub n0: f64,
    /// Maximum admitted packets per source per slot.
    pub r_max: f64,
    /// Per-link service cap in packets per slot.
    pub mu_max: f64,
    /// Maximum packets dropped per (node, session) per slot.
    pub d_max: f64,
    /// Upper bound of the per-slot harvest draw (uniform on `[0, h_max]`).
    pub h_max: f64,
    /// Channel gain multiplier bounds (uniform on `[s_c_min, s_c_max]`).
    pub s_c_min: f64,
    pub s_c_max: f64,
    /// Grid price bounds (uniform on `[s_g_min, s_g_max]`).
    pub s_g_min: f64,
    pub s_g_max: f64,
    /// Master RNG seed.
    pub seed: u64,
    /// Default number of simulated slots.
    pub slots: u64,
    /// Baseline only: increment the opportunistic delay queue only when the
    /// data queue is non-empty (`true`) or unconditionally (`false`).
    #[serde(default = "default_true")]
    pub neely_gated: bool,
    /// Baseline only: substitute the opportunistic delay queue into the link
    /// weights as well as the drop rule (`true`), or drop rule only (`false`).
    #[serde(default = "default_true")]
    pub neely_weight_substitution: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub v_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub algos: Vec<String>,
    pub slots: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub nodes: Vec<RawNode>,
    pub links: Vec<RawLink>,
    pub sessions: Vec<RawSession>,
    pub params: RawParams,
    #[serde(default)]
    pub sweep: Option<RawSweep>,
}

impl RawConfig {
    /// Parses a configuration from a JSON string. Parse errors keep serde's
    /// line/column anchoring.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The configuration shipped with the repository: 13 nodes, 32 directed
    /// links, 8 sessions, 10 channels.
    pub fn default_config() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped default config must parse")
    }
}

/// JSON text of the shipped default configuration.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../../configs/default.json");
