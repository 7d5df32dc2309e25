//! Objective evaluation, per-slot bound assertions, the drift constant B,
//! run-level accumulation, and the sweep CSV schema with its trend verdicts.

use crate::env::EnvState;
use crate::model::{NetworkModel, NodeIdx, SessIdx};
use crate::queues::{QueueState, ServiceOutcome};
use crate::scheduler::{utility, Algo};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Numerical slack on deterministic bound checks.
const BOUND_TOL: f64 = 1e-9;
/// How many violations keep full context for printing.
const DETAIL_CAP: usize = 50;

pub const CSV_HEADER: &str = "V,seed,algo,phi_bar,avg_Q,avg_Qtilde,avg_Z,avg_E,\
drops_realized,drops_decided,max_delay_ratio,violations,B_bound,gap_bound";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Data backlog above its deterministic bound.
    DataBound,
    /// Delay virtual queue above its deterministic bound.
    DelayQueueBound,
    /// Flow-state queue above its deterministic bound.
    FlowBound,
    /// Battery charged beyond the perturbation level.
    EnergyCap,
    /// A FIFO delay sample above the worst-case bound.
    DelayBound,
    /// Power consumed in a slot exceeded the start-of-slot battery level.
    EnergyAvailability,
    /// Battery below the worst-case per-slot consumption while spending.
    /// Stricter than what the controller enforces for sensing right after a
    /// cold start, so it is reported without gating anything.
    EnergyReserve,
}

impl ViolationKind {
    /// Whether this kind counts toward the report's violation total (and so
    /// toward strict-mode exit codes).
    pub fn gates(self) -> bool {
        self != ViolationKind::EnergyReserve
    }

    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::DataBound => "data-bound",
            ViolationKind::DelayQueueBound => "delay-queue-bound",
            ViolationKind::FlowBound => "flow-bound",
            ViolationKind::EnergyCap => "energy-cap",
            ViolationKind::DelayBound => "delay-bound",
            ViolationKind::EnergyAvailability => "energy-availability",
            ViolationKind::EnergyReserve => "energy-reserve",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub slot: u64,
    pub node: NodeIdx,
    pub session: Option<SessIdx>,
    pub kind: ViolationKind,
    pub value: f64,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slot {} node {} session {} {}: {} > {}",
            self.slot,
            self.node,
            self.session.map_or_else(|| "-".into(), |s| s.to_string()),
            self.kind.label(),
            self.value,
            self.bound
        )
    }
}

/// Per-slot objective from the decision values: weighted utility of the
/// auxiliary rates at the sources, minus the weighted drop penalty over all
/// node/session pairs (decision values, not realized drops), minus the
/// weighted purchase cost at grid-connected nodes.
pub fn slot_objective(
    model: &NetworkModel,
    r_aux: &[f64],
    drops: &[f64],
    g: &[f64],
    env: &EnvState,
) -> f64 {
    let p = &model.params;
    let mut reward = 0.0;
    for (f, sess) in model.sessions.iter().enumerate() {
        reward += utility(r_aux[model.nf(sess.source, f)], sess.beta);
    }
    let mut penalty = 0.0;
    for n in 0..model.n_nodes() {
        for (f, sess) in model.sessions.iter().enumerate() {
            penalty += sess.beta * drops[model.nf(n, f)];
        }
    }
    let mut purchase = 0.0;
    for (n, node) in model.nodes.iter().enumerate() {
        if node.power_class.grid_connected() {
            purchase += crate::env::price(env.s_price[n], g[n]) * g[n];
        }
    }
    p.omega1 * (reward - penalty) - (1.0 - p.omega1) * p.omega2 * purchase
}

/// The drift constant: one quadratic group per queue family, each evaluated
/// at its worst-case per-slot change. Valid for any policy, not tight.
pub fn compute_b(model: &NetworkModel) -> f64 {
    let p = &model.params;
    let mut b = 0.0;
    for n in 0..model.n_nodes() {
        for (f, sess) in model.sessions.iter().enumerate() {
            let admit = if model.is_source(n, f) { p.r_max } else { 0.0 };
            let depart = model.caps.mu_out_max[n] + p.d_max;
            let arrive = model.caps.mu_in_max[n] + admit;
            // Data queue: the net change is largest with one side at its cap.
            b += 0.5 * depart.max(arrive).powi(2);
            // Delay queue: drains by at most depart - eps, grows by at most eps.
            b += 0.5 * (depart - sess.epsilon).max(sess.epsilon).powi(2);
        }
    }
    // Flow-state queues move by at most R_max in either direction.
    b += 0.5 * model.n_sessions() as f64 * p.r_max * p.r_max;
    for (n, node) in model.nodes.iter().enumerate() {
        let mut intake = 0.0;
        if node.power_class.harvests() {
            intake += p.h_max;
        }
        if node.power_class.grid_connected() {
            intake += node.g_max;
        }
        b += 0.5 * intake.max(model.caps.p_total_max[n]).powi(2);
    }
    b
}

/// Checks the end-of-slot state against the deterministic queue bounds and
/// the start-of-slot battery against the power actually consumed. The queue
/// bounds only claim anything for the primary algorithm, so `queue_checks`
/// is off for the baseline; the energy checks apply to both.
#[allow(clippy::too_many_arguments)]
pub fn assert_bounds(
    model: &NetworkModel,
    queues: &QueueState,
    p_total: &[f64],
    e_start: &[f64],
    slot: u64,
    queue_checks: bool,
    out: &mut Vec<Violation>,
) {
    let bounds = &model.bounds;
    let mut push = |node, session, kind, value: f64, bound: f64| {
        if value > bound + BOUND_TOL {
            out.push(Violation { slot, node, session, kind, value, bound });
        }
    };
    if queue_checks {
        for n in 0..model.n_nodes() {
            for f in 0..model.n_sessions() {
                let i = model.nf(n, f);
                push(n, Some(f), ViolationKind::DataBound, queues.q[i], bounds.q_max[i]);
                push(n, Some(f), ViolationKind::DelayQueueBound, queues.qtilde[i], bounds.qtilde_max[i]);
                push(n, Some(f), ViolationKind::FlowBound, queues.z[i], bounds.z_max[i]);
            }
        }
    }
    for n in 0..model.n_nodes() {
        push(n, None, ViolationKind::EnergyCap, queues.e[n], bounds.theta_e[n]);
        if p_total[n] > 0.0 {
            push(n, None, ViolationKind::EnergyAvailability, p_total[n], e_start[n]);
            push(n, None, ViolationKind::EnergyReserve, model.caps.p_total_max[n], e_start[n]);
        }
    }
}

/// Per (node, session) maximum observed FIFO delay against the worst-case
/// bound. Ratios are measured against the bound rounded up to whole slots.
#[derive(Debug, Clone)]
pub struct DelayReport {
    pub max_observed: Vec<u64>,
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
}

pub fn delay_report(max_observed: &[u64], model: &NetworkModel) -> DelayReport {
    let ratio: Vec<f64> = max_observed
        .iter()
        .zip(&model.bounds.w_max)
        .map(|(&d, &w)| {
            if w.is_finite() && w > 0.0 {
                d as f64 / w.ceil()
            } else {
                0.0
            }
        })
        .collect();
    let max_ratio = ratio.iter().fold(0.0, |a: f64, &b| a.max(b));
    DelayReport { max_observed: max_observed.to_vec(), ratio, max_ratio }
}

/// Everything `observe_slot` needs beyond the queue state itself.
pub struct SlotObservation<'a> {
    pub t: u64,
    pub phi: f64,
    /// Realized consumption per node, before any availability clipping.
    pub p_total: &'a [f64],
    /// Start-of-slot battery levels.
    pub e_start: &'a [f64],
    /// Sum of decision-valued drops this slot.
    pub drops_decided: f64,
    /// (sweeps, kkt residual, hit iteration cap) when the solver ran.
    pub bcd: Option<(u32, f64, bool)>,
    /// Active links whose capacity exceeded `delta` times their transmit
    /// power this slot.
    pub linkage_violations: u32,
}

pub struct MetricsAccumulator {
    algo: Algo,
    b_bound: f64,
    slots: u64,
    phi_sum: f64,
    q_sum: f64,
    qtilde_sum: f64,
    z_sum: f64,
    e_sum: f64,
    drops_realized: f64,
    drops_decided: f64,
    delivered: f64,
    max_delay: Vec<u64>,
    max_delay_ratio: f64,
    counts: BTreeMap<ViolationKind, u64>,
    detail: Vec<Violation>,
    linkage_violations: u64,
    bcd_cap_hits: u64,
    bcd_sweeps_max: u32,
    scratch: Vec<Violation>,
}

impl MetricsAccumulator {
    pub fn new(model: &NetworkModel, algo: Algo) -> Self {
        MetricsAccumulator {
            algo,
            b_bound: compute_b(model),
            slots: 0,
            phi_sum: 0.0,
            q_sum: 0.0,
            qtilde_sum: 0.0,
            z_sum: 0.0,
            e_sum: 0.0,
            drops_realized: 0.0,
            drops_decided: 0.0,
            delivered: 0.0,
            max_delay: vec![0; model.n_nodes() * model.n_sessions()],
            max_delay_ratio: 0.0,
            counts: BTreeMap::new(),
            detail: Vec::new(),
            linkage_violations: 0,
            bcd_cap_hits: 0,
            bcd_sweeps_max: 0,
            scratch: Vec::new(),
        }
    }

    /// Folds one finished slot into the running averages and checks every
    /// per-slot bound. `delay_view` is the delay virtual queue for the
    /// primary algorithm and the persistent-service queue for the baseline.
    pub fn observe_slot(
        &mut self,
        model: &NetworkModel,
        queues: &QueueState,
        delay_view: &[f64],
        outcome: &ServiceOutcome,
        obs: &SlotObservation,
    ) {
        self.slots += 1;
        self.phi_sum += obs.phi;
        self.q_sum += queues.q.iter().sum::<f64>();
        self.qtilde_sum += delay_view.iter().sum::<f64>();
        self.z_sum += queues.z.iter().sum::<f64>();
        self.e_sum += queues.e.iter().sum::<f64>();
        self.drops_realized += outcome.d_hat.iter().sum::<f64>();
        self.drops_decided += obs.drops_decided;
        self.delivered += outcome.delivered;

        for &(n, f, d) in &outcome.delay_samples {
            let i = model.nf(n, f);
            self.max_delay[i] = self.max_delay[i].max(d);
            let w = model.bounds.w_max[i];
            if w.is_finite() && w > 0.0 {
                let ceil_w = w.ceil();
                self.max_delay_ratio = self.max_delay_ratio.max(d as f64 / ceil_w);
                if self.algo == Algo::Clca && d as f64 > ceil_w {
                    self.record(Violation {
                        slot: obs.t,
                        node: n,
                        session: Some(f),
                        kind: ViolationKind::DelayBound,
                        value: d as f64,
                        bound: ceil_w,
                    });
                }
            }
        }

        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        assert_bounds(
            model,
            queues,
            obs.p_total,
            obs.e_start,
            obs.t,
            self.algo == Algo::Clca,
            &mut scratch,
        );
        for v in scratch.drain(..) {
            self.record(v);
        }
        self.scratch = scratch;

        if let Some((sweeps, _, hit_cap)) = obs.bcd {
            self.bcd_sweeps_max = self.bcd_sweeps_max.max(sweeps);
            if hit_cap {
                self.bcd_cap_hits += 1;
            }
        }
        self.linkage_violations += u64::from(obs.linkage_violations);
    }

    fn record(&mut self, v: Violation) {
        *self.counts.entry(v.kind).or_insert(0) += 1;
        if self.detail.len() < DETAIL_CAP {
            self.detail.push(v);
        }
    }

    /// Count of violations that gate exit codes (everything but the reserve
    /// diagnostic).
    pub fn gating_violations(&self) -> u64 {
        self.counts.iter().filter(|(k, _)| k.gates()).map(|(_, c)| c).sum()
    }

    pub fn finish(self, model: &NetworkModel, seed: u64) -> RunReport {
        let slots = self.slots.max(1) as f64;
        let violations = self.gating_violations();
        let v = model.params.v;
        RunReport {
            v,
            seed,
            algo: self.algo,
            slots: self.slots,
            phi_bar: self.phi_sum / slots,
            avg_q: self.q_sum / slots,
            avg_qtilde: self.qtilde_sum / slots,
            avg_z: self.z_sum / slots,
            avg_e: self.e_sum / slots,
            drops_realized: self.drops_realized,
            drops_decided: self.drops_decided,
            max_delay_ratio: self.max_delay_ratio,
            violations,
            b_bound: self.b_bound,
            gap_bound: if v > 0.0 { self.b_bound / v } else { f64::INFINITY },
            violation_counts: self.counts,
            violation_detail: self.detail,
            max_delay: self.max_delay,
            delivered: self.delivered,
            linkage_violations: self.linkage_violations,
            bcd_cap_hits: self.bcd_cap_hits,
            bcd_sweeps_max: self.bcd_sweeps_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub v: f64,
    pub seed: u64,
    pub algo: Algo,
    pub slots: u64,
    pub phi_bar: f64,
    pub avg_q: f64,
    pub avg_qtilde: f64,
    pub avg_z: f64,
    pub avg_e: f64,
    pub drops_realized: f64,
    pub drops_decided: f64,
    pub max_delay_ratio: f64,
    /// Gating violations only; the reserve diagnostic is in the counts map.
    pub violations: u64,
    pub b_bound: f64,
    pub gap_bound: f64,
    pub violation_counts: BTreeMap<ViolationKind, u64>,
    pub violation_detail: Vec<Violation>,
    pub max_delay: Vec<u64>,
    pub delivered: f64,
    pub linkage_violations: u64,
    pub bcd_cap_hits: u64,
    pub bcd_sweeps_max: u32,
}

impl RunReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.v,
            self.seed,
            self.algo,
            self.phi_bar,
            self.avg_q,
            self.avg_qtilde,
            self.avg_z,
            self.avg_e,
            self.drops_realized,
            self.drops_decided,
            self.max_delay_ratio,
            self.violations,
            self.b_bound,
            self.gap_bound
        )
    }

    pub fn to_sweep_row(&self) -> SweepRow {
        SweepRow {
            v: self.v,
            seed: self.seed,
            algo: self.algo.to_string(),
            phi_bar: self.phi_bar,
            avg_q: self.avg_q,
            avg_qtilde: self.avg_qtilde,
            avg_z: self.avg_z,
            avg_e: self.avg_e,
            drops_realized: self.drops_realized,
            drops_decided: self.drops_decided,
            max_delay_ratio: self.max_delay_ratio,
            violations: self.violations,
            b_bound: self.b_bound,
            gap_bound: self.gap_bound,
        }
    }
}

#[derive(Debug, Error)]
#[error("csv error at line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

/// One parsed summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub v: f64,
    pub seed: u64,
    pub algo: String,
    pub phi_bar: f64,
    pub avg_q: f64,
    pub avg_qtilde: f64,
    pub avg_z: f64,
    pub avg_e: f64,
    pub drops_realized: f64,
    pub drops_decided: f64,
    pub max_delay_ratio: f64,
    pub violations: u64,
    pub b_bound: f64,
    pub gap_bound: f64,
}

impl SweepRow {
    /// The Lyapunov-state total used for the backlog-versus-V fit.
    pub fn total_backlog(&self) -> f64 {
        self.avg_q + self.avg_qtilde + self.avg_z + self.avg_e
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CsvError { line: 1, message: "empty file".into() })?;
    if header.trim_end() != CSV_HEADER {
        return Err(CsvError { line: 1, message: format!("unexpected header: {header}") });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(CsvError {
                line: i + 1,
                message: format!("expected 14 fields, found {}", fields.len()),
            });
        }
        let fl = |k: usize| -> Result<f64, CsvError> {
            fields[k].parse().map_err(|e| CsvError {
                line: i + 1,
                message: format!("field {}: {e}", k + 1),
            })
        };
        let int = |k: usize| -> Result<u64, CsvError> {
            fields[k].parse().map_err(|e| CsvError {
                line: i + 1,
                message: format!("field {}: {e}", k + 1),
            })
        };
        rows.push(SweepRow {
            v: fl(0)?,
            seed: int(1)?,
            algo: fields[2].to_string(),
            phi_bar: fl(3)?,
            avg_q: fl(4)?,
            avg_qtilde: fl(5)?,
            avg_z: fl(6)?,
            avg_e: fl(7)?,
            drops_realized: fl(8)?,
            drops_decided: fl(9)?,
            max_delay_ratio: fl(10)?,
            violations: int(11)?,
            b_bound: fl(12)?,
            gap_bound: fl(13)?,
        })
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        })
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-V mean and standard error of a metric over seeds, sorted by V,
/// restricted to one algorithm.
pub fn stats_by_v(rows: &[SweepRow], algo: &str, metric: impl Fn(&SweepRow) -> f64) -> Vec<(f64, f64, f64)> {
    let mut vs: Vec<f64> = rows.iter().filter(|r| r.algo == algo).map(|r| r.v).collect();
    vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vs.dedup();
    vs.iter()
        .map(|&v| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.algo == algo && r.v == v)
                .map(&metric)
                .collect();
            let (m, se) = mean_se(&xs);
            (v, m, se)
        })
        .collect()
}

/// Objective non-decreasing in V within one (combined) standard error.
pub fn monotonicity_verdict(rows: &[SweepRow]) -> Verdict {
    let stats = stats_by_v(rows, "clca", |r| r.phi_bar);
    if stats.len() < 2 {
        return Verdict::Skipped;
    }
    for pair in stats.windows(2) {
        let (_, m0, se0) = pair[0];
        let (_, m1, se1) = pair[1];
        if m1 < m0 - (se0 * se0 + se1 * se1).sqrt() {
            return Verdict::Fail;
        }
    }
    Verdict::Pass
}

/// The objective's increment between the two largest V values must be
/// smaller than the increment between the second and third smallest.
pub fn diminishing_verdict(rows: &[SweepRow]) -> Verdict {
    let stats = stats_by_v(rows, "clca", |r| r.phi_bar);
    if stats.len() < 4 {
        return Verdict::Skipped;
    }
    let early = stats[2].1 - stats[1].1;
    let late = stats[stats.len() - 1].1 - stats[stats.len() - 2].1;
    if late < early {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Least-squares fit of total backlog versus V; returns (slope, intercept,
/// R^2) over per-V means.
pub fn backlog_fit(rows: &[SweepRow]) -> Option<(f64, f64, f64)> {
    let stats = stats_by_v(rows, "clca", |r| r.total_backlog());
    if stats.len() < 3 {
        return None;
    }
    let n = stats.len() as f64;
    let xbar = stats.iter().map(|s| s.0).sum::<f64>() / n;
    let ybar = stats.iter().map(|s| s.1).sum::<f64>() / n;
    let ssxx: f64 = stats.iter().map(|s| (s.0 - xbar).powi(2)).sum();
    let ssyy: f64 = stats.iter().map(|s| (s.1 - ybar).powi(2)).sum();
    let ssxy: f64 = stats.iter().map(|s| (s.0 - xbar) * (s.1 - ybar)).sum();
    let slope = ssxy / ssxx;
    let intercept = ybar - slope * xbar;
    let r2 = if ssyy == 0.0 { 1.0 } else { ssxy * ssxy / (ssxx * ssyy) };
    Some((slope, intercept, r2))
}

/// At the reference V: no realized drops on any primary-algorithm run, and
/// strictly positive drops on every baseline run.
pub fn drop_comparison_verdict(rows: &[SweepRow], v_ref: f64) -> Verdict {
    let clca: Vec<&SweepRow> =
        rows.iter().filter(|r| r.algo == "clca" && r.v == v_ref).collect();
    let neely: Vec<&SweepRow> =
        rows.iter().filter(|r| r.algo == "neely" && r.v == v_ref).collect();
    if clca.is_empty() || neely.is_empty() {
        return Verdict::Skipped;
    }
    let clca_clean = clca.iter().all(|r| r.drops_realized == 0.0);
    let neely_drops = neely.iter().all(|r| r.drops_realized > 0.0);
    if clca_clean && neely_drops {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Baseline mean objective at or below the primary algorithm's at every V
/// present for both.
pub fn phi_dominance_verdict(rows: &[SweepRow]) -> Verdict {
    let clca = stats_by_v(rows, "clca", |r| r.phi_bar);
    let neely = stats_by_v(rows, "neely", |r| r.phi_bar);
    if clca.is_empty() || neely.is_empty() {
        return Verdict::Skipped;
    }
    for &(v, m_neely, _) in &neely {
        if let Some(&(_, m_clca, _)) = clca.iter().find(|s| s.0 == v) {
            if m_neely > m_clca {
                return Verdict::Fail;
            }
        }
    }
    Verdict::Pass
}

/// Largest delay ratio over primary-algorithm rows; must stay at or below 1.
pub fn delay_ratio_verdict(rows: &[SweepRow]) -> (f64, Verdict) {
    let max = rows
        .iter()
        .filter(|r| r.algo == "clca")
        .map(|r| r.max_delay_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (0.0, Verdict::Skipped);
    }
    (max, if max <= 1.0 { Verdict::Pass } else { Verdict::Fail })
}

/// Total gating violations across the given rows.
pub fn violations_total(rows: &[SweepRow]) -> u64 {
    rows.iter().map(|r| r.violations).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use crate::model::validate_config;
    use approx::assert_relative_eq;

    fn model() -> NetworkModel {
        validate_config(&RawConfig::default_config()).unwrap().model
    }

    fn zero_env(m: &NetworkModel) -> EnvState {
        EnvState {
            s_channel: vec![0.0; m.n_nodes() * m.n_nodes()],
            s_harvest: vec![0.0; m.n_nodes()],
            s_price: vec![0.8; m.n_nodes()],
        }
    }

    #[test]
    fn slot_objective_examples() {
        let m = model();
        let env = zero_env(&m);
        let nfs = m.n_nodes() * m.n_sessions();
        let zeros = vec![0.0; nfs];
        let gz = vec![0.0; m.n_nodes()];
        assert_eq!(slot_objective(&m, &zeros, &zeros, &gz, &env), 0.0);

        // One source admits an auxiliary rate of 2.
        let mut r_aux = zeros.clone();
        r_aux[m.nf(m.sessions[0].source, 0)] = 2.0;
        let phi = slot_objective(&m, &r_aux, &zeros, &gz, &env);
        assert_relative_eq!(phi, 0.5 * 3.0_f64.ln(), epsilon = 1e-12);

        // Add one decision drop of 9 somewhere.
        let mut drops = zeros.clone();
        drops[m.nf(5, 2)] = 9.0;
        let phi = slot_objective(&m, &r_aux, &drops, &gz, &env);
        assert_relative_eq!(phi, 0.5 * (3.0_f64.ln() - 9.0), epsilon = 1e-12);

        // A grid purchase of 2 units at price 0.8.
        let grid = m.nodes.iter().position(|n| n.power_class.grid_connected()).unwrap();
        let mut g = gz.clone();
        g[grid] = 2.0;
        let phi = slot_objective(&m, &zeros, &zeros, &g, &env);
        assert_relative_eq!(phi, -0.5 * 0.8 * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn b_constant_is_positive_and_monotone_in_r_max() {
        let m = model();
        let b = compute_b(&m);
        assert!(b.is_finite() && b > 0.0);
        let mut wider = m.clone();
        wider.params.r_max *= 2.0;
        assert!(compute_b(&wider) >= b);
    }

    #[test]
    fn injected_breach_yields_exactly_one_violation() {
        let m = model();
        let mut queues = crate::queues::QueueState::new(&m);
        let i = m.nf(0, 0);
        queues.q[i] = m.bounds.q_max[i] + 1.0;
        let p_total = vec![0.0; m.n_nodes()];
        let e_start = vec![0.0; m.n_nodes()];
        let mut out = Vec::new();
        assert_bounds(&m, &queues, &p_total, &e_start, 7, true, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, ViolationKind::DataBound);
        assert_eq!(out[0].slot, 7);
        assert_eq!(out[0].node, 0);
    }

    #[test]
    fn availability_and_reserve_track_power_use() {
        let m = model();
        let queues = crate::queues::QueueState::new(&m);
        let mut p_total = vec![0.0; m.n_nodes()];
        let mut e_start = vec![0.0; m.n_nodes()];
        p_total[3] = 1.0;
        e_start[3] = 0.4; // below both consumption and the reserve level
        let mut out = Vec::new();
        assert_bounds(&m, &queues, &p_total, &e_start, 0, false, &mut out);
        let kinds: Vec<ViolationKind> = out.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::EnergyAvailability));
        assert!(kinds.contains(&ViolationKind::EnergyReserve));
        assert!(out.iter().all(|v| v.node == 3));
        // The reserve kind never gates.
        assert!(ViolationKind::EnergyAvailability.gates());
        assert!(!ViolationKind::EnergyReserve.gates());
    }

    #[test]
    fn csv_roundtrip() {
        let m = model();
        let acc = MetricsAccumulator::new(&m, Algo::Clca);
        let mut report = acc.finish(&m, 3);
        report.phi_bar = 1.2345678901234567;
        report.max_delay_ratio = 0.25;
        let text = format!("{}\n{}\n", CSV_HEADER, report.csv_row());
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0], report.to_sweep_row());
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("wrong,header\n").is_err());
        let bad_row = format!("{}\n1,2,clca,nope\n", CSV_HEADER);
        assert!(parse_csv(&bad_row).is_err());
    }

    fn row(v: f64, seed: u64, algo: &str, phi: f64, backlog: f64, drops: f64) -> SweepRow {
        SweepRow {
            v,
            seed,
            algo: algo.into(),
            phi_bar: phi,
            avg_q: backlog,
            avg_qtilde: 0.0,
            avg_z: 0.0,
            avg_e: 0.0,
            drops_realized: drops,
            drops_decided: drops,
            max_delay_ratio: 0.4,
            violations: 0,
            b_bound: 100.0,
            gap_bound: 100.0 / v,
        }
    }

    #[test]
    fn trend_verdicts_on_synthetic_rows() {
        let grid = [50.0, 150.0, 350.0, 750.0];
        let mut rows = Vec::new();
        for (i, &v) in grid.iter().enumerate() {
            for seed in 1..=3 {
                // Saturating, increasing objective and linear backlog.
                let phi = 1.0 - 1.0 / (i + 1) as f64 + 0.001 * seed as f64;
                rows.push(row(v, seed, "clca", phi, 2.0 * v + 5.0, 0.0));
                rows.push(row(v, seed, "neely", phi - 0.5, 2.0 * v, 12.0));
            }
        }
        assert_eq!(monotonicity_verdict(&rows), Verdict::Pass);
        assert_eq!(diminishing_verdict(&rows), Verdict::Pass);
        let (slope, _, r2) = backlog_fit(&rows).unwrap();
        assert!(slope > 0.0);
        assert!(r2 > 0.999, "r2 = {r2}");
        assert_eq!(drop_comparison_verdict(&rows, 750.0), Verdict::Pass);
        assert_eq!(phi_dominance_verdict(&rows), Verdict::Pass);
        let (ratio, verdict) = delay_ratio_verdict(&rows);
        assert_eq!(verdict, Verdict::Pass);
        assert!(ratio <= 1.0);
        assert_eq!(violations_total(&rows), 0);
    }

    #[test]
    fn injected_decrease_fails_monotonicity() {
        let mut rows = vec![
            row(50.0, 1, "clca", 1.0, 100.0, 0.0),
            row(150.0, 1, "clca", 2.0, 300.0, 0.0),
        ];
        assert_eq!(monotonicity_verdict(&rows), Verdict::Pass);
        rows[1].phi_bar = -1.0;
        assert_eq!(monotonicity_verdict(&rows), Verdict::Fail);
        // A single V value cannot support a trend claim.
        assert_eq!(monotonicity_verdict(&rows[..1]), Verdict::Skipped);
        assert_eq!(diminishing_verdict(&rows), Verdict::Skipped);
        assert!(backlog_fit(&rows[..1]).is_none());
    }

    #[test]
    fn delay_report_uses_rounded_bounds() {
        let m = model();
        let nfs = m.n_nodes() * m.n_sessions();
        let mut observed = vec![0_u64; nfs];
        observed[0] = 10;
        let rep = delay_report(&observed, &m);
        let expected = 10.0 / m.bounds.w_max[0].ceil();
        assert_relative_eq!(rep.max_ratio, expected);
        assert_relative_eq!(rep.ratio[0], expected);
        assert_eq!(rep.max_observed[0], 10);
    }
}
