//! Sweep execution: the (V, seed, algorithm) plan, run-level parallelism,
//! and deterministic report ordering.

use crate::config::RawSweep;
use crate::metrics::RunReport;
use crate::model::NetworkModel;
use crate::scheduler::{run_simulation, Algo, AlgoParseError};
use rayon::prelude::*;

/// One cell of the experiment plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub v: f64,
    pub seed: u64,
    pub algo: Algo,
    pub slots: u64,
}

/// Cross product in deterministic plan order: V-major, then seed, then
/// algorithm.
pub fn plan(v_grid: &[f64], seeds: &[u64], algos: &[Algo], slots: u64) -> Vec<RunSpec> {
    let mut specs = Vec::with_capacity(v_grid.len() * seeds.len() * algos.len());
    for &v in v_grid {
        for &seed in seeds {
            for &algo in algos {
                specs.push(RunSpec { v, seed, algo, slots });
            }
        }
    }
    specs
}

/// Builds the plan straight from a config's sweep section.
pub fn plan_from_sweep(sweep: &RawSweep) -> Result<Vec<RunSpec>, AlgoParseError> {
    let algos: Vec<Algo> = sweep.algos.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    Ok(plan(&sweep.v_grid, &sweep.seeds, &algos, sweep.slots))
}

/// Runs one plan cell against a model re-derived at the cell's V.
pub fn run_one(model: &NetworkModel, spec: &RunSpec) -> RunReport {
    let m = model.with_v(spec.v);
    run_simulation(&m, spec.seed, spec.slots, spec.algo, None)
}

/// Executes the whole plan with `parallel` worker threads (1 means fully
/// serial on the caller's thread). Reports come back in plan order no
/// matter how the runs were scheduled, and each run is independent, so the
/// output is identical at any parallelism level.
pub fn run_sweep(model: &NetworkModel, specs: &[RunSpec], parallel: usize) -> Vec<RunReport> {
    if parallel <= 1 {
        return specs.iter().map(|s| run_one(model, s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("failed to build worker pool");
    pool.install(|| specs.par_iter().map(|s| run_one(model, s)).collect())
}

/// Stable output order for CSV emission: by V, then seed, then algorithm.
pub fn sort_reports(reports: &mut [RunReport]) {
    reports.sort_by(|a, b| {
        a.v.partial_cmp(&b.v)
            .unwrap()
            .then(a.seed.cmp(&b.seed))
            .then(a.algo.to_string().cmp(&b.algo.to_string()))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use crate::model::validate_config;

    fn model() -> NetworkModel {
        validate_config(&RawConfig::default_config()).unwrap().model
    }

    #[test]
    fn plan_covers_the_cross_product_in_order() {
        let raw = RawConfig::default_config();
        let specs = plan_from_sweep(&raw.sweep.unwrap()).unwrap();
        assert_eq!(specs.len(), 8 * 5 * 2);
        assert_eq!(specs[0], RunSpec { v: 50.0, seed: 1, algo: Algo::Clca, slots: 30000 });
        assert_eq!(specs[1].algo, Algo::Neely);
        assert_eq!(specs[2].seed, 2);
        assert_eq!(specs[10].v, 150.0);
    }

    #[test]
    fn unknown_algo_is_rejected() {
        let mut sweep = RawConfig::default_config().sweep.unwrap();
        sweep.algos.push("annealing".into());
        assert!(plan_from_sweep(&sweep).is_err());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let m = model();
        let specs = plan(&[150.0, 750.0], &[1], &[Algo::Clca, Algo::Neely], 120);
        let serial = run_sweep(&m, &specs, 1);
        let threaded = run_sweep(&m, &specs, 4);
        let rows = |rs: &[RunReport]| rs.iter().map(|r| r.csv_row()).collect::<Vec<_>>();
        assert_eq!(rows(&serial), rows(&threaded));
    }

    #[test]
    fn sorting_is_stable_and_total() {
        let m = model();
        let mut specs = plan(&[750.0, 150.0], &[2, 1], &[Algo::Neely, Algo::Clca], 40);
        let mut reports = run_sweep(&m, &specs, 1);
        sort_reports(&mut reports);
        specs.sort_by(|a, b| {
            a.v.partial_cmp(&b.v)
                .unwrap()
                .then(a.seed.cmp(&b.seed))
                .then(a.algo.to_string().cmp(&b.algo.to_string()))
        });
        for (r, s) in reports.iter().zip(&specs) {
            assert_eq!((r.v, r.seed, r.algo), (s.v, s.seed, s.algo));
        }
    }
}
