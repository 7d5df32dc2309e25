//! Python bindings for the clca-core simulator.
//!
//! The module exposes the validated network model, the deterministic bound
//! calculator, and the slot-level simulator behind a small surface:
//!
//! ```python
//! import clca_py
//! model = clca_py.Model.default()
//! report = model.simulate(v=750.0, seed=1, slots=2000)
//! print(report.phi_bar, report.violations)
//! ```

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use clca_core::config::RawConfig;
use clca_core::harness::{self, RunSpec};
use clca_core::metrics::{RunReport, CSV_HEADER};
use clca_core::model::{self, NetworkModel};
use clca_core::scheduler::Algo;

fn parse_algo(name: &str) -> PyResult<Algo> {
    name.parse::<Algo>().map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A validated network model plus any non-fatal validation warnings.
#[pyclass(frozen)]
struct Model {
    inner: NetworkModel,
    warnings: Vec<String>,
}

fn validate(raw: &RawConfig) -> PyResult<Model> {
    match model::validate_config(raw) {
        Ok(v) => Ok(Model { inner: v.model, warnings: v.warnings }),
        Err(errors) => {
            let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            Err(PyValueError::new_err(lines.join("; ")))
        }
    }
}

#[pymethods]
impl Model {
    /// Parses and validates a configuration from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let raw = RawConfig::from_json(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        validate(&raw)
    }

    /// Reads and validates a configuration file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Self::from_json(&text)
    }

    /// The configuration shipped with the crate: 13 nodes, 32 links, 8
    /// sessions on 10 channels.
    #[staticmethod]
    #[pyo3(name = "default")]
    fn default_model() -> Self {
        validate(&RawConfig::default_config()).expect("shipped default config is valid")
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_links(&self) -> usize {
        self.inner.n_links()
    }

    #[getter]
    fn n_sessions(&self) -> usize {
        self.inner.n_sessions()
    }

    /// The control parameter V the model was configured with.
    #[getter]
    fn v(&self) -> f64 {
        self.inner.params.v
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Deterministic queue and delay bounds at the given V. Defaults to the
    /// model's configured V.
    #[pyo3(signature = (v=None))]
    fn bounds(&self, v: Option<f64>) -> Bounds {
        let m = match v {
            Some(v) => self.inner.with_v(v),
            None => self.inner.clone(),
        };
        let max = |xs: &[f64]| xs.iter().fold(0.0_f64, |acc, &x| acc.max(x));
        let w_max = max(&m.bounds.w_max);
        Bounds {
            v: m.params.v,
            z_max: max(&m.bounds.z_max),
            qtilde_max: max(&m.bounds.qtilde_max),
            q_max: max(&m.bounds.q_max),
            theta_e: m.bounds.theta_e.clone(),
            w_max,
            delay_slots: w_max.ceil() as u64,
        }
    }

    /// Runs one simulation and returns its summary report. Unset arguments
    /// default to the model's configured values; `algo` is "clca" or "neely".
    #[pyo3(signature = (v=None, seed=None, slots=None, algo="clca"))]
    fn simulate(&self, v: Option<f64>, seed: Option<u64>, slots: Option<u64>, algo: &str) -> PyResult<Report> {
        let spec = RunSpec {
            v: v.unwrap_or(self.inner.params.v),
            seed: seed.unwrap_or(self.inner.params.seed),
            algo: parse_algo(algo)?,
            slots: slots.unwrap_or(self.inner.params.slots),
        };
        Ok(Report(harness::run_one(&self.inner, &spec)))
    }

    /// Runs the cross product of `v_grid`, `seeds`, and `algos`, optionally
    /// on a thread pool. Report order is deterministic regardless of
    /// `parallel`: V-major, then seed, then algorithm.
    #[pyo3(signature = (v_grid, seeds, algos=None, slots=None, parallel=1))]
    fn sweep(
        &self,
        v_grid: Vec<f64>,
        seeds: Vec<u64>,
        algos: Option<Vec<String>>,
        slots: Option<u64>,
        parallel: usize,
    ) -> PyResult<Vec<Report>> {
        let algos = match algos {
            Some(names) => names.iter().map(|n| parse_algo(n)).collect::<PyResult<Vec<_>>>()?,
            None => vec![Algo::Clca],
        };
        let specs = harness::plan(&v_grid, &seeds, &algos, slots.unwrap_or(self.inner.params.slots));
        let reports = harness::run_sweep(&self.inner, &specs, parallel);
        Ok(reports.into_iter().map(Report).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(nodes={}, links={}, sessions={}, v={})",
            self.inner.n_nodes(),
            self.inner.n_links(),
            self.inner.n_sessions(),
            self.inner.params.v
        )
    }
}

/// Scalar summaries of the deterministic per-slot bounds at a fixed V.
#[pyclass(get_all, frozen)]
struct Bounds {
    /// The V the bounds were computed at.
    v: f64,
    /// Largest flow-state queue bound over all (node, session) pairs.
    z_max: f64,
    /// Largest delay virtual-queue bound over all (node, session) pairs.
    qtilde_max: f64,
    /// Largest data backlog bound over all (node, session) pairs.
    q_max: f64,
    /// Battery perturbation target (also the battery cap) per node.
    theta_e: Vec<f64>,
    /// Largest worst-case FIFO delay over all (node, session) pairs.
    w_max: f64,
    /// `w_max` rounded up to whole slots.
    delay_slots: u64,
}

#[pymethods]
impl Bounds {
    fn __repr__(&self) -> String {
        format!(
            "Bounds(v={}, z_max={}, qtilde_max={}, q_max={}, w_max={})",
            self.v, self.z_max, self.qtilde_max, self.q_max, self.w_max
        )
    }
}

/// Summary of one simulation run. Scalar fields mirror the sweep CSV columns.
#[pyclass(frozen)]
struct Report(RunReport);

#[pymethods]
impl Report {
    #[getter]
    fn v(&self) -> f64 {
        self.0.v
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn algo(&self) -> String {
        self.0.algo.to_string()
    }

    #[getter]
    fn slots(&self) -> u64 {
        self.0.slots
    }

    /// Time-averaged objective value.
    #[getter]
    fn phi_bar(&self) -> f64 {
        self.0.phi_bar
    }

    #[getter]
    fn avg_q(&self) -> f64 {
        self.0.avg_q
    }

    #[getter]
    fn avg_qtilde(&self) -> f64 {
        self.0.avg_qtilde
    }

    #[getter]
    fn avg_z(&self) -> f64 {
        self.0.avg_z
    }

    #[getter]
    fn avg_e(&self) -> f64 {
        self.0.avg_e
    }

    #[getter]
    fn drops_realized(&self) -> f64 {
        self.0.drops_realized
    }

    #[getter]
    fn drops_decided(&self) -> f64 {
        self.0.drops_decided
    }

    /// Largest observed FIFO delay divided by its worst-case bound.
    #[getter]
    fn max_delay_ratio(&self) -> f64 {
        self.0.max_delay_ratio
    }

    /// Total gating violations (zero for a correct controller run).
    #[getter]
    fn violations(&self) -> u64 {
        self.0.violations
    }

    /// Violation tallies keyed by check label, diagnostics included.
    #[getter]
    fn violation_counts(&self) -> BTreeMap<&'static str, u64> {
        self.0.violation_counts.iter().map(|(k, n)| (k.label(), *n)).collect()
    }

    #[getter]
    fn b_bound(&self) -> f64 {
        self.0.b_bound
    }

    #[getter]
    fn gap_bound(&self) -> f64 {
        self.0.gap_bound
    }

    /// Total data delivered to sinks over the run.
    #[getter]
    fn delivered(&self) -> f64 {
        self.0.delivered
    }

    /// Slots where the power solver stopped without certifying stationarity.
    #[getter]
    fn bcd_cap_hits(&self) -> u64 {
        self.0.bcd_cap_hits
    }

    /// One CSV row matching `CSV_HEADER`.
    fn csv_row(&self) -> String {
        self.0.csv_row()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(v={}, seed={}, algo={}, phi_bar={:.4}, violations={})",
            self.0.v, self.0.seed, self.0.algo, self.0.phi_bar, self.0.violations
        )
    }
}

/// Worst-case FIFO delay, in slots, for the given queue bounds and drain
/// parameters. Raises `ValueError` when the drain cannot exceed the arrival
/// floor.
#[pyfunction]
fn worst_case_delay_bound(
    q_max: f64,
    qtilde_max: f64,
    rho: f64,
    epsilon: f64,
    mu_out_max: f64,
    d_max: f64,
) -> PyResult<f64> {
    model::worst_case_delay_bound(q_max, qtilde_max, rho, epsilon, mu_out_max, d_max)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The delay-optimal queue weighting, or `None` when the bound has no
/// interior minimum and the configured fallback should be used.
#[pyfunction]
fn optimal_rho(q_max: f64, qtilde_max: f64, mu_out_max: f64, d_max: f64, epsilon: f64) -> Option<f64> {
    model::optimal_rho(q_max, qtilde_max, mu_out_max, d_max, epsilon)
}

#[pymodule]
fn clca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Bounds>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(worst_case_delay_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_rho, m)?)?;
    m.add("CSV_HEADER", CSV_HEADER)?;
    Ok(())
}
