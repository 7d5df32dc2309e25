//! Queue state: data queues with FIFO batch ledgers (for realized delay
//! measurement), delay virtual queues, flow-state queues, and batteries.

use crate::config::PowerClass;
use crate::model::{NetworkModel, NodeIdx, SessIdx};
use std::collections::VecDeque;

/// Amounts below this are treated as fully consumed so float remainders
/// cannot linger in a ledger and masquerade as ancient undelivered data.
const DUST: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct Batch {
    pub arrived: u64,
    pub amount: f64,
}

/// Per-slot mutable simulation state. `q` always equals the corresponding
/// ledger sum: it is recomputed from the ledger after every mutation.
#[derive(Debug, Clone)]
pub struct QueueState {
    n_sessions: usize,
    pub q: Vec<f64>,
    pub qtilde: Vec<f64>,
    pub z: Vec<f64>,
    pub e: Vec<f64>,
    pub ledgers: Vec<VecDeque<Batch>>,
}

/// Realized effects of one slot's service and drop decisions.
#[derive(Debug, Clone, Default)]
pub struct ServiceOutcome {
    /// Realized transfer per link.
    pub mu_hat_link: Vec<f64>,
    /// Realized total service out of each (node, session).
    pub mu_hat_out: Vec<f64>,
    /// Realized drop per (node, session).
    pub d_hat: Vec<f64>,
    /// Realized receptions per node, all sessions (costs reception energy).
    pub recv_in: Vec<f64>,
    /// Amount absorbed at session sinks this slot.
    pub delivered: f64,
    /// FIFO delay of every batch fully emptied by service this slot.
    pub delay_samples: Vec<(NodeIdx, SessIdx, u64)>,
    deliveries: Vec<(NodeIdx, SessIdx, f64)>,
}

impl ServiceOutcome {
    pub fn for_model(model: &NetworkModel) -> Self {
        ServiceOutcome {
            mu_hat_link: vec![0.0; model.n_links()],
            mu_hat_out: vec![0.0; model.n_nodes() * model.n_sessions()],
            d_hat: vec![0.0; model.n_nodes() * model.n_sessions()],
            recv_in: vec![0.0; model.n_nodes()],
            delivered: 0.0,
            delay_samples: Vec::new(),
            deliveries: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.mu_hat_link.iter_mut().for_each(|x| *x = 0.0);
        self.mu_hat_out.iter_mut().for_each(|x| *x = 0.0);
        self.d_hat.iter_mut().for_each(|x| *x = 0.0);
        self.recv_in.iter_mut().for_each(|x| *x = 0.0);
        self.delivered = 0.0;
        self.delay_samples.clear();
        self.deliveries.clear();
    }
}

impl QueueState {
    pub fn new(model: &NetworkModel) -> Self {
        let nf = model.n_nodes() * model.n_sessions();
        QueueState {
            n_sessions: model.n_sessions(),
            q: vec![0.0; nf],
            qtilde: vec![0.0; nf],
            z: vec![0.0; nf],
            e: vec![0.0; model.n_nodes()],
            ledgers: vec![VecDeque::new(); nf],
        }
    }

    #[inline]
    fn nf(&self, n: NodeIdx, f: SessIdx) -> usize {
        n * self.n_sessions + f
    }

    pub fn total_data_backlog(&self) -> f64 {
        self.q.iter().sum()
    }

    /// Applies the slot's service allocations and drop decisions to the
    /// ledgers. `alloc` maps each link to its selected session and granted
    /// rate. Service is taken head-first before drops, capped by what is
    /// actually present; amounts served toward a session's sink leave the
    /// network. Arrivals land after all service, so in-flight data cannot be
    /// forwarded twice in one slot.
    pub fn apply_service_and_drops(
        &mut self,
        model: &NetworkModel,
        t: u64,
        alloc: &[Option<(SessIdx, f64)>],
        drops: &[f64],
        out: &mut ServiceOutcome,
    ) {
        out.reset();

        for (l, slot) in alloc.iter().enumerate() {
            let Some((f, amount)) = *slot else { continue };
            assert!(amount >= 0.0 && amount.is_finite(), "negative or non-finite rate");
            if amount <= 0.0 {
                continue;
            }
            let link = &model.links[l];
            let idx = self.nf(link.from, f);
            let served =
                consume(&mut self.ledgers[idx], amount, Some((link.from, f, t, &mut *out)));
            if served > 0.0 {
                out.mu_hat_link[l] = served;
                out.mu_hat_out[idx] += served;
                out.deliveries.push((link.to, f, served));
            }
        }

        for n in 0..model.n_nodes() {
            for f in 0..model.n_sessions() {
                let idx = self.nf(n, f);
                let d = drops[idx];
                assert!(d >= 0.0 && d.is_finite(), "negative or non-finite drop");
                if d > 0.0 {
                    out.d_hat[idx] = consume(&mut self.ledgers[idx], d, None);
                }
            }
        }

        for di in 0..out.deliveries.len() {
            let (b, f, amount) = out.deliveries[di];
            out.recv_in[b] += amount;
            if model.sessions[f].sink == b {
                out.delivered += amount;
            } else {
                let idx = self.nf(b, f);
                self.ledgers[idx].push_back(Batch { arrived: t, amount });
            }
        }

        self.sync_q();
    }

    /// End-of-slot admissions: each nonzero `r[n,f]` becomes a fresh batch
    /// stamped with the current slot.
    pub fn admit(&mut self, model: &NetworkModel, t: u64, r: &[f64]) {
        for n in 0..model.n_nodes() {
            for f in 0..model.n_sessions() {
                let idx = self.nf(n, f);
                let amount = r[idx];
                assert!(amount >= 0.0 && amount.is_finite(), "negative or non-finite admission");
                assert!(
                    amount <= model.params.r_max + 1e-9,
                    "admission above cap: {amount}"
                );
                if amount > 0.0 {
                    assert!(model.is_source(n, f), "admission at a non-source");
                    self.ledgers[idx].push_back(Batch { arrived: t, amount });
                }
            }
        }
        self.sync_q();
    }

    fn sync_q(&mut self) {
        for (idx, ledger) in self.ledgers.iter().enumerate() {
            self.q[idx] = ledger.iter().map(|b| b.amount).sum();
        }
    }

    /// Debug check: the cached backlog equals the ledger sum.
    pub fn ledger_consistent(&self) -> bool {
        self.ledgers
            .iter()
            .zip(&self.q)
            .all(|(ledger, &q)| (ledger.iter().map(|b| b.amount).sum::<f64>() - q).abs() == 0.0)
    }
}

/// Removes up to `want` head-first from a ledger; returns the amount
/// actually removed. When `sample` carries slot context, every batch fully
/// emptied here yields a FIFO delay sample (service); with `None` the
/// removal is a drop and batches vanish silently.
fn consume(
    ledger: &mut VecDeque<Batch>,
    want: f64,
    mut sample: Option<(NodeIdx, SessIdx, u64, &mut ServiceOutcome)>,
) -> f64 {
    let mut remaining = want;
    let mut taken = 0.0;
    while remaining > 0.0 {
        let Some(head) = ledger.front_mut() else { break };
        if head.amount <= remaining + DUST {
            // Batch fully departs.
            taken += head.amount;
            remaining -= head.amount;
            let arrived = head.arrived;
            ledger.pop_front();
            if let Some((n, f, t, out)) = sample.as_mut() {
                out.delay_samples.push((*n, *f, t.saturating_sub(arrived)));
            }
        } else {
            head.amount -= remaining;
            taken += remaining;
            remaining = 0.0;
        }
    }
    taken.min(want)
}

/// Delay virtual queue step. The branch on start-of-slot backlogs either
/// drains by the realized service and drops or by the maximum possible
/// drain, and the persistent arrival lands in both.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn update_delay_queue(
    qtilde: f64,
    q: f64,
    mu_hat_out: f64,
    d_hat: f64,
    epsilon: f64,
    mu_out_max: f64,
    d_max: f64,
    rho: f64,
) -> f64 {
    if q > rho * qtilde {
        (qtilde - mu_hat_out - d_hat + epsilon).max(0.0)
    } else {
        (qtilde - mu_out_max - d_max + epsilon).max(0.0)
    }
}

/// Flow-state queue step.
#[inline]
pub fn update_flow_queue(z: f64, r: f64, r_aux: f64) -> f64 {
    (z - r + r_aux).max(0.0)
}

/// Battery step; harvesting and purchase are masked by the node's class.
/// Callers must have verified availability (consumption within the
/// start-of-slot level) and the charge cap beforehand.
#[inline]
pub fn update_energy_queue(e: f64, intake: f64, purchase: f64, p_total: f64, class: PowerClass) -> f64 {
    let intake = if class.harvests() { intake } else { 0.0 };
    let purchase = if class.grid_connected() { purchase } else { 0.0 };
    (e + intake + purchase - p_total).max(0.0)
}
