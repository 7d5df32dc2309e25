//! Randomized invariants that hold for every valid input, as opposed to the
//! example-based unit tests inside the modules.

use clca_core::config::{PowerClass, RawConfig};
use clca_core::env::sample_env;
use clca_core::model::{validate_config, worst_case_delay_bound, NetworkModel};
use clca_core::power::PowerInstance;
use clca_core::queues::{update_delay_queue, update_energy_queue, update_flow_queue, ServiceOutcome};
use clca_core::scheduler::{argmax_session, run_slot, Algo, SimState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn default_model() -> NetworkModel {
    validate_config(&RawConfig::default_config())
        .expect("default config is valid")
        .model
}

proptest! {
    /// Every per-pair bound grows affinely when V does, with the slope the
    /// analysis prescribes (omega1 * beta for the queue bounds, twice
    /// delta * omega1 * beta for the battery target).
    #[test]
    fn bounds_scale_affinely_in_v(v in 1.0f64..5000.0) {
        let m = default_model();
        let at_v = m.with_v(v);
        let at_2v = m.with_v(2.0 * v);
        let w1 = m.params.omega1;
        for (f, s) in m.sessions.iter().enumerate() {
            for n in 0..m.n_nodes() {
                let i = m.nf(n, f);
                let dz = at_2v.bounds.z_max[i] - at_v.bounds.z_max[i];
                prop_assert!((dz - v * w1 * s.beta).abs() < 1e-9 * v.max(1.0));
                let dq = at_2v.bounds.q_max[i] - at_v.bounds.q_max[i];
                prop_assert!((dq - v * w1 * s.beta).abs() < 1e-9 * v.max(1.0));
            }
        }
        let beta_max = m.sessions.iter().map(|s| s.beta).fold(0.0, f64::max);
        for n in 0..m.n_nodes() {
            let dth = at_2v.bounds.theta_e[n] - at_v.bounds.theta_e[n];
            let want = 2.0 * m.params.delta * v * w1 * beta_max;
            prop_assert!((dth - want).abs() < 1e-9 * v.max(1.0));
        }
    }

    /// The worst-case delay bound never shrinks when either queue bound grows.
    #[test]
    fn delay_bound_monotone_in_queue_bounds(
        q in 0.1f64..1e4,
        qt in 0.1f64..1e4,
        dq in 0.0f64..1e3,
        dqt in 0.0f64..1e3,
        rho in 0.1f64..20.0,
        eps in 0.5f64..8.0,
    ) {
        // Keep the drain margin positive so the bound exists on both sides.
        let (mu_out, d_max) = (3.0, 9.0);
        let base = worst_case_delay_bound(q, qt, rho, eps, mu_out, d_max).unwrap();
        let grown = worst_case_delay_bound(q + dq, qt + dqt, rho, eps, mu_out, d_max).unwrap();
        prop_assert!(grown >= base - 1e-12);
    }

    /// All three scalar queue steps map nonnegative inputs to nonnegative
    /// outputs regardless of how service, drops and spending interleave.
    #[test]
    fn queue_steps_stay_nonnegative(
        q in 0.0f64..500.0,
        qt in 0.0f64..500.0,
        served in 0.0f64..20.0,
        dropped in 0.0f64..20.0,
        z in 0.0f64..500.0,
        r in 0.0f64..3.0,
        r_aux in 0.0f64..3.0,
        e in 0.0f64..100.0,
        intake in 0.0f64..2.0,
        buy in 0.0f64..2.0,
        spend in 0.0f64..150.0,
        rho in 0.5f64..10.0,
    ) {
        let next_qt = update_delay_queue(qt, q, served, dropped, 6.0, 4.5, 9.0, rho);
        prop_assert!(next_qt >= 0.0);
        prop_assert!(update_flow_queue(z, r, r_aux) >= 0.0);
        for class in [PowerClass::Harvest, PowerClass::Grid, PowerClass::Mixed] {
            prop_assert!(update_energy_queue(e, intake, buy, spend, class) >= 0.0);
        }
    }

    /// Scaling a weight vector by any positive constant never changes which
    /// session the link picks.
    #[test]
    fn argmax_is_scale_invariant(
        weights in prop::collection::vec(-100.0f64..100.0, 1..8),
        scale in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let lhs = argmax_session(&weights).map(|(f, _)| f);
        let rhs = argmax_session(&scaled).map(|(f, _)| f);
        prop_assert_eq!(lhs, rhs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Telescoped packet conservation: everything admitted over a run is
    /// either delivered to a sink, dropped, or still queued at the end.
    #[test]
    fn admissions_telescope_into_deliveries_drops_and_backlog(
        seed in 0u64..1000,
        v in 20.0f64..2000.0,
        neely in proptest::bool::ANY,
    ) {
        let m = default_model().with_v(v);
        let algo = if neely { Algo::Neely } else { Algo::Clca };
        let mut state = SimState::new(&m);
        let mut outcome = ServiceOutcome::for_model(&m);
        let (mut admitted, mut delivered, mut dropped) = (0.0f64, 0.0f64, 0.0f64);
        for t in 0..200 {
            let env = sample_env(&m, seed, t);
            let out = run_slot(&m, &mut state, &env, t, algo, &mut outcome);
            admitted += out.decision.r.iter().sum::<f64>();
            delivered += outcome.delivered;
            dropped += outcome.d_hat.iter().sum::<f64>();
        }
        let backlog = state.queues.total_data_backlog();
        let lhs = admitted;
        let rhs = delivered + dropped + backlog;
        prop_assert!(
            (lhs - rhs).abs() <= 1e-6 * lhs.max(1.0),
            "admitted {} != delivered {} + dropped {} + backlog {}",
            admitted, delivered, dropped, backlog
        );
    }
}

/// Random mutually interfering instances with one single-link block per
/// transmitter; every pair interferes so no block takes the decoupled path.
fn random_coupled_instance(rng: &mut impl Rng) -> PowerInstance {
    let m = rng.random_range(2..=3usize);
    let links: Vec<usize> = (0..m).collect();
    let weight: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..80.0)).collect();
    let battery: Vec<f64> = (0..m).map(|_| -rng.random_range(0.01..80.0)).collect();
    let s_own: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..2.0)).collect();
    let interf: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| (j, rng.random_range(1e-4..0.2)))
                .collect()
        })
        .collect();
    let blocks = (0..m)
        .map(|i| (i, vec![i], rng.random_range(0.5..3.0)))
        .collect();
    PowerInstance {
        links,
        weight,
        battery,
        s_own,
        interf,
        blocks,
        n0: rng.random_range(1e-3..0.5),
    }
}

#[test]
fn bcd_is_ascending_feasible_and_stationary_on_random_instances() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let inst = random_coupled_instance(&mut rng);
        let sol = inst.solve(1e-6, 20, 50).expect("finite instance");
        for pair in sol.sweep_objectives.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-12,
                "case {case}: sweep objective decreased {} -> {}",
                pair[0],
                pair[1]
            );
        }
        for (node, members, p_max) in &inst.blocks {
            let total: f64 = members.iter().map(|&i| sol.p_lin[i]).sum();
            assert!(
                total <= p_max + 1e-9,
                "case {case}: node {node} spends {total} over cap {p_max}"
            );
        }
        if !sol.hit_cap {
            assert!(
                sol.kkt_residual < 1e-5,
                "case {case}: converged with kkt residual {}",
                sol.kkt_residual
            );
        }
    }
}
