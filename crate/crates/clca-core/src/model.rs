//! Static network description, semantic validation, and the derived
//! deterministic bounds that the verification layer asserts at run time.

use crate::config::{PowerClass, RawConfig, RawParams};
use thiserror::Error;

/// Dense node index.
pub type NodeIdx = usize;
/// Dense session index.
pub type SessIdx = usize;
/// Dense link index.
pub type LinkIdx = usize;

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub id: String,
    pub power_class: PowerClass,
    pub position: [f64; 2],
    /// True when at least one session originates here.
    pub is_source: bool,
    /// Sessions originated at this node.
    pub sessions: Vec<SessIdx>,
    pub p_max: f64,
    pub p_recv_unit: f64,
    pub g_max: f64,
}

#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub id: String,
    pub source: NodeIdx,
    pub sink: NodeIdx,
    pub beta: f64,
    pub epsilon: f64,
    pub p_sense_unit: f64,
}

#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub from: NodeIdx,
    pub to: NodeIdx,
    pub channel: usize,
    pub distance: f64,
}

/// Global scalars after validation. Field meanings match [`RawParams`].
#[derive(Debug, Clone)]
pub struct GlobalParams {
    pub v: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub rho: f64,
    pub delta: f64,
    pub n0: f64,
    pub r_max: f64,
    pub mu_max: f64,
    pub d_max: f64,
    pub h_max: f64,
    pub s_c_min: f64,
    pub s_c_max: f64,
    pub s_g_min: f64,
    pub s_g_max: f64,
    pub seed: u64,
    pub slots: u64,
    pub neely_gated: bool,
    pub neely_weight_substitution: bool,
}

/// Per-node service and power caps derived from the topology.
#[derive(Debug, Clone)]
pub struct DerivedCaps {
    /// `mu_max * in_degree`: most data a node can receive per slot.
    pub mu_in_max: Vec<f64>,
    /// `mu_max * out_degree`: most data a node can send per slot.
    pub mu_out_max: Vec<f64>,
    /// Worst-case total power draw per slot (sensing + transmit + receive).
    pub p_total_max: Vec<f64>,
}

/// Deterministic queue bounds and the battery perturbation, all affine in V.
/// Data/delay/flow bounds are indexed `[node * n_sessions + session]`.
#[derive(Debug, Clone)]
pub struct DerivedBounds {
    pub z_max: Vec<f64>,
    pub qtilde_max: Vec<f64>,
    pub q_max: Vec<f64>,
    /// Battery perturbation target per node (also the battery cap).
    pub theta_e: Vec<f64>,
    /// Worst-case FIFO delay bound per (node, session), in slots.
    pub w_max: Vec<f64>,
}

/// Fully derived, validated network model.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub nodes: Vec<NodeSpec>,
    pub sessions: Vec<SessionSpec>,
    pub links: Vec<LinkSpec>,
    pub params: GlobalParams,
    pub caps: DerivedCaps,
    pub bounds: DerivedBounds,
    /// Out-links per node, ascending link index.
    pub out_links: Vec<Vec<LinkIdx>>,
    /// In-links per node, ascending link index.
    pub in_links: Vec<Vec<LinkIdx>>,
    /// Links whose transmissions interfere with a given link: same channel,
    /// different transmitter.
    pub interferers: Vec<Vec<LinkIdx>>,
    /// `d^-4` path-loss factor for every ordered node pair (row = tx).
    /// The diagonal is zero: self-interference is not modeled.
    pub dist4inv: Vec<f64>,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Result of a successful validation: the derived model plus non-fatal
/// assumption warnings.
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: NetworkModel,
    pub warnings: Vec<String>,
}

impl NetworkModel {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Flat index into per-(node, session) arrays.
    #[inline]
    pub fn nf(&self, n: NodeIdx, f: SessIdx) -> usize {
        n * self.sessions.len() + f
    }

    pub fn is_source(&self, n: NodeIdx, f: SessIdx) -> bool {
        self.sessions[f].source == n
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIdx> {
        self.nodes.iter().position(|node| node.id == id)
    }

    /// Clone of the model with a different trade-off weight `V`; the affine
    /// bounds are recomputed.
    pub fn with_v(&self, v: f64) -> NetworkModel {
        let mut m = self.clone();
        m.params.v = v;
        m.bounds = compute_bounds(&m.nodes, &m.sessions, &m.params, &m.caps);
        m
    }
}

/// Validates a raw configuration and derives the model. All problems found in
/// one pass are returned together.
pub fn validate_config(raw: &RawConfig) -> Result<Validated, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut err = |msg: String| errors.push(ConfigError(msg));

    if raw.nodes.is_empty() {
        err("config has no nodes".into());
    }

    // Node identity and per-node scalars.
    for (i, node) in raw.nodes.iter().enumerate() {
        if raw.nodes[..i].iter().any(|other| other.id == node.id) {
            err(format!("duplicate node id {:?}", node.id));
        }
        if node.p_max < 0.0 || !node.p_max.is_finite() {
            err(format!("node {:?}: p_max must be finite and >= 0", node.id));
        }
        if node.p_recv_unit < 0.0 || !node.p_recv_unit.is_finite() {
            err(format!("node {:?}: p_recv_unit must be finite and >= 0", node.id));
        }
        if node.g_max < 0.0 || !node.g_max.is_finite() {
            err(format!("node {:?}: g_max must be finite and >= 0", node.id));
        }
        if node.power_class == PowerClass::Harvest && node.g_max > 0.0 {
            err(format!(
                "node {:?} is harvest-only but has g_max = {} > 0",
                node.id, node.g_max
            ));
        }
        for other in &raw.nodes[..i] {
            if other.position == node.position {
                err(format!(
                    "nodes {:?} and {:?} share position {:?}; distances would be zero",
                    other.id, node.id, node.position
                ));
            }
        }
    }

    let node_index = |id: &str| raw.nodes.iter().position(|n| n.id == id);

    // Links.
    let mut links = Vec::with_capacity(raw.links.len());
    for (i, link) in raw.links.iter().enumerate() {
        let from = node_index(&link.from);
        let to = node_index(&link.to);
        if from.is_none() {
            err(format!("link {}: unknown endpoint {:?}", i, link.from));
        }
        if to.is_none() {
            err(format!("link {}: unknown endpoint {:?}", i, link.to));
        }
        if link.from == link.to {
            err(format!("link {}: self-loop at {:?}", i, link.from));
        }
        if raw.links[..i]
            .iter()
            .any(|other| other.from == link.from && other.to == link.to)
        {
            err(format!("duplicate link {:?} -> {:?}", link.from, link.to));
        }
        if let (Some(from), Some(to)) = (from, to) {
            if from != to {
                let pa = raw.nodes[from].position;
                let pb = raw.nodes[to].position;
                let distance = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
                links.push(LinkSpec { from, to, channel: link.channel, distance });
            }
        }
    }

    // Sessions.
    let mut sessions = Vec::with_capacity(raw.sessions.len());
    for (i, s) in raw.sessions.iter().enumerate() {
        if raw.sessions[..i].iter().any(|other| other.id == s.id) {
            err(format!("duplicate session id {:?}", s.id));
        }
        let source = node_index(&s.source);
        let sink = node_index(&s.sink);
        if source.is_none() {
            err(format!("session {:?}: unknown source {:?}", s.id, s.source));
        }
        if sink.is_none() {
            err(format!("session {:?}: unknown sink {:?}", s.id, s.sink));
        }
        if s.source == s.sink {
            err(format!("session {:?}: source equals sink", s.id));
        }
        if s.beta <= 0.0 || !s.beta.is_finite() {
            err(format!("session {:?}: beta must be finite and > 0", s.id));
        }
        if s.epsilon <= 0.0 || !s.epsilon.is_finite() {
            err(format!("session {:?}: epsilon must be finite and > 0", s.id));
        }
        if s.epsilon > raw.params.d_max {
            err(format!(
                "session {:?}: epsilon = {} exceeds d_max = {}",
                s.id, s.epsilon, raw.params.d_max
            ));
        }
        if s.p_sense_unit < 0.0 || !s.p_sense_unit.is_finite() {
            err(format!("session {:?}: p_sense_unit must be finite and >= 0", s.id));
        }
        if let (Some(source), Some(sink)) = (source, sink) {
            if source != sink {
                sessions.push(SessionSpec {
                    id: s.id.clone(),
                    source,
                    sink,
                    beta: s.beta,
                    epsilon: s.epsilon,
                    p_sense_unit: s.p_sense_unit,
                });
            }
        }
    }

    check_params(&raw.params, &mut err);

    if let Some(sweep) = &raw.sweep {
        if sweep.v_grid.is_empty() {
            err("sweep: v_grid is empty".into());
        }
        for &v in &sweep.v_grid {
            if v <= 0.0 || !v.is_finite() {
                err(format!("sweep: V = {} must be finite and > 0", v));
            }
        }
        if sweep.seeds.is_empty() {
            err("sweep: seeds is empty".into());
        }
        if sweep.slots == 0 {
            err("sweep: slots must be > 0".into());
        }
        for algo in &sweep.algos {
            if algo != "clca" && algo != "neely" {
                err(format!("sweep: unknown algorithm {:?} (expected clca or neely)", algo));
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    let params = GlobalParams {
        v: raw.params.v,
        omega1: raw.params.omega1,
        omega2: raw.params.omega2,
        rho: raw.params.rho,
        delta: raw.params.delta,
        n0: raw.params.n0,
        r_max: raw.params.r_max,
        mu_max: raw.params.mu_max,
        d_max: raw.params.d_max,
        h_max: raw.params.h_max,
        s_c_min: raw.params.s_c_min,
        s_c_max: raw.params.s_c_max,
        s_g_min: raw.params.s_g_min,
        s_g_max: raw.params.s_g_max,
        seed: raw.params.seed,
        slots: raw.params.slots,
        neely_gated: raw.params.neely_gated,
        neely_weight_substitution: raw.params.neely_weight_substitution,
    };

    let nodes: Vec<NodeSpec> = raw
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| {
            let owned: Vec<SessIdx> = sessions
                .iter()
                .enumerate()
                .filter(|(_, s)| s.source == n)
                .map(|(f, _)| f)
                .collect();
            NodeSpec {
                id: node.id.clone(),
                power_class: node.power_class,
                position: node.position,
                is_source: !owned.is_empty(),
                sessions: owned,
                p_max: node.p_max,
                p_recv_unit: node.p_recv_unit,
                g_max: node.g_max,
            }
        })
        .collect();

    let n_nodes = nodes.len();
    let mut out_links = vec![Vec::new(); n_nodes];
    let mut in_links = vec![Vec::new(); n_nodes];
    for (l, link) in links.iter().enumerate() {
        out_links[link.from].push(l);
        in_links[link.to].push(l);
    }

    let interferers: Vec<Vec<LinkIdx>> = links
        .iter()
        .map(|link| {
            links
                .iter()
                .enumerate()
                .filter(|(_, other)| other.channel == link.channel && other.from != link.from)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let mut dist4inv = vec![0.0; n_nodes * n_nodes];
    for a in 0..n_nodes {
        for b in 0..n_nodes {
            if a != b {
                let pa = nodes[a].position;
                let pb = nodes[b].position;
                let d2 = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2);
                dist4inv[a * n_nodes + b] = 1.0 / (d2 * d2);
            }
        }
    }

    let caps = derive_caps(&nodes, &sessions, &params, &in_links, &out_links);
    let bounds = compute_bounds(&nodes, &sessions, &params, &caps);

    let mut warnings = Vec::new();
    for (n, node) in nodes.iter().enumerate() {
        let arrivals = caps.mu_in_max[n] + params.r_max;
        let eps_max = sessions.iter().map(|s| s.epsilon).fold(0.0, f64::max);
        if arrivals.max(eps_max) > params.d_max {
            warnings.push(format!(
                "node {:?}: max(epsilon, mu_in_max + r_max) = {} exceeds d_max = {}; \
                 the deterministic queue bounds are not guaranteed",
                node.id,
                arrivals.max(eps_max),
                params.d_max
            ));
        }
    }

    let model = NetworkModel {
        nodes,
        sessions,
        links,
        params,
        caps,
        bounds,
        out_links,
        in_links,
        interferers,
        dist4inv,
    };
    Ok(Validated { model, warnings })
}

fn check_params(p: &RawParams, err: &mut impl FnMut(String)) {
    let positive: [(&str, f64); 9] = [
        ("v", p.v),
        ("omega1", p.omega1),
        ("omega2", p.omega2),
        ("rho", p.rho),
        ("delta", p.delta),
        ("n0", p.n0),
        ("r_max", p.r_max),
        ("mu_max", p.mu_max),
        ("d_max", p.d_max),
    ];
    for (name, value) in positive {
        if value <= 0.0 || !value.is_finite() {
            err(format!("params.{} = {} must be finite and > 0", name, value));
        }
    }
    if p.h_max < 0.0 || !p.h_max.is_finite() {
        err(format!("params.h_max = {} must be finite and >= 0", p.h_max));
    }
    if p.s_c_min <= 0.0 || p.s_c_max < p.s_c_min {
        err(format!(
            "channel gain bounds [{}, {}] must satisfy 0 < s_c_min <= s_c_max",
            p.s_c_min, p.s_c_max
        ));
    }
    if p.s_g_min < 0.0 || p.s_g_max < p.s_g_min {
        err(format!(
            "grid price bounds [{}, {}] must satisfy 0 <= s_g_min <= s_g_max",
            p.s_g_min, p.s_g_max
        ));
    }
    if p.slots == 0 {
        err("params.slots must be > 0".into());
    }
}

fn derive_caps(
    nodes: &[NodeSpec],
    sessions: &[SessionSpec],
    params: &GlobalParams,
    in_links: &[Vec<LinkIdx>],
    out_links: &[Vec<LinkIdx>],
) -> DerivedCaps {
    let mu_in_max: Vec<f64> = in_links.iter().map(|l| l.len() as f64 * params.mu_max).collect();
    let mu_out_max: Vec<f64> = out_links.iter().map(|l| l.len() as f64 * params.mu_max).collect();
    let p_total_max: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(n, node)| {
            let sensing: f64 = node
                .sessions
                .iter()
                .map(|&f| sessions[f].p_sense_unit * params.r_max)
                .sum();
            sensing + node.p_max + node.p_recv_unit * mu_in_max[n]
        })
        .collect();
    DerivedCaps { mu_in_max, mu_out_max, p_total_max }
}

/// Computes the deterministic bounds for the given parameters. All of them
/// are affine in `params.v`.
pub fn compute_bounds(
    nodes: &[NodeSpec],
    sessions: &[SessionSpec],
    params: &GlobalParams,
    caps: &DerivedCaps,
) -> DerivedBounds {
    let n_nodes = nodes.len();
    let n_sessions = sessions.len();
    let mut z_max = vec![0.0; n_nodes * n_sessions];
    let mut qtilde_max = vec![0.0; n_nodes * n_sessions];
    let mut q_max = vec![0.0; n_nodes * n_sessions];
    let mut w_max = vec![0.0; n_nodes * n_sessions];

    for n in 0..n_nodes {
        for (f, s) in sessions.iter().enumerate() {
            let i = n * n_sessions + f;
            let vw1b = params.v * params.omega1 * s.beta;
            z_max[i] = vw1b + params.r_max;
            qtilde_max[i] = vw1b + s.epsilon;
            let admit = if s.source == n { params.r_max } else { 0.0 };
            q_max[i] = vw1b + caps.mu_in_max[n] + admit;
            w_max[i] = worst_case_delay_bound(
                q_max[i],
                qtilde_max[i],
                params.rho,
                s.epsilon,
                caps.mu_out_max[n],
                params.d_max,
            )
            .unwrap_or(f64::INFINITY);
        }
    }

    let beta_max = sessions.iter().map(|s| s.beta).fold(0.0, f64::max);
    let eps_max = sessions.iter().map(|s| s.epsilon).fold(0.0, f64::max);
    let theta_e: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(n, _)| {
            2.0 * params.delta * params.v * params.omega1 * beta_max
                + caps.p_total_max[n]
                + params.delta * (caps.mu_in_max[n] + params.r_max + eps_max)
        })
        .collect();

    DerivedBounds { z_max, qtilde_max, q_max, theta_e, w_max }
}

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("delay bound requires rho > 0 and epsilon > 0")]
    BadParams,
    #[error("delay bound requires mu_out_max + d_max > epsilon (got {0} <= {1})")]
    Infeasible(f64, f64),
}

/// Worst-case FIFO delay (in slots) of non-dropped data at one node for one
/// session: the larger of the two regime bounds of the delay-queue switch.
pub fn worst_case_delay_bound(
    q_max: f64,
    qtilde_max: f64,
    rho: f64,
    epsilon: f64,
    mu_out_max: f64,
    d_max: f64,
) -> Result<f64, BoundError> {
    if rho <= 0.0 || epsilon <= 0.0 {
        return Err(BoundError::BadParams);
    }
    let drain = mu_out_max + d_max;
    if drain <= epsilon {
        return Err(BoundError::Infeasible(drain, epsilon));
    }
    let high_data = ((1.0 + rho) * q_max + rho * qtilde_max) / (rho * epsilon);
    let high_delay = 2.0 * qtilde_max / (drain - epsilon);
    Ok(high_data.max(high_delay))
}

/// The smallest `rho` minimizing the worst-case delay bound. The first
/// branch of the bound decreases in `rho` toward `(q_max + qtilde_max) /
/// epsilon`; when that limit already dominates the second branch the optimum
/// is not attained and `None` is returned, in which case the caller should
/// fall back to a configured `rho`.
pub fn optimal_rho(
    q_max: f64,
    qtilde_max: f64,
    mu_out_max: f64,
    d_max: f64,
    epsilon: f64,
) -> Option<f64> {
    let drain = mu_out_max + d_max - epsilon;
    if drain <= 0.0 {
        return None;
    }
    let denom = 2.0 * qtilde_max * epsilon - (q_max + qtilde_max) * drain;
    if denom <= 0.0 {
        return None;
    }
    let rho = q_max * drain / denom;
    (rho > 0.0).then_some(rho)
}
