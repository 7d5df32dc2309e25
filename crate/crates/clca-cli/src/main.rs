//! Command-line harness around the simulator core.
//!
//! Exit codes: 0 success, 1 configuration or CSV error, 2 invariant
//! violation under `--strict-invariants`, 3 partial sweep failure.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use clca_core::config::{PowerClass, RawConfig, RawSweep};
use clca_core::harness::{plan_from_sweep, run_one, RunSpec};
use clca_core::metrics::{
    backlog_fit, delay_ratio_verdict, diminishing_verdict, drop_comparison_verdict,
    monotonicity_verdict, parse_csv, phi_dominance_verdict, stats_by_v, violations_total,
    RunReport, SweepRow, Verdict, CSV_HEADER,
};
use clca_core::model::{validate_config, NetworkModel};
use clca_core::scheduler::{run_simulation, Algo, TraceSink};

const EXIT_CONFIG: u8 = 1;
const EXIT_STRICT: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "clca",
    version,
    about = "Cross-layer control simulator for heterogeneously powered sensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print derived caps and bounds.
    Validate {
        /// JSON configuration file.
        config: PathBuf,
        /// Also print the queue/delay bound table for every V in the sweep grid.
        #[arg(long)]
        print_bounds: bool,
    },
    /// Run one simulation cell and append its summary row.
    Simulate {
        /// JSON configuration file.
        config: PathBuf,
        /// Scheduling algorithm: clca or neely.
        #[arg(long, default_value = "clca")]
        algo: String,
        /// Trade-off weight; defaults to the config's params.v.
        #[arg(long)]
        v: Option<f64>,
        /// RNG seed; defaults to the config's params.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Horizon in slots; defaults to the config's params.slots.
        #[arg(long)]
        slots: Option<u64>,
        /// Output directory for sweep_summary.csv (and trace.csv).
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Exit with status 2 if any per-slot invariant check fails.
        #[arg(long)]
        strict_invariants: bool,
        /// Write a per-slot trace.csv next to the summary.
        #[arg(long)]
        trace: bool,
    },
    /// Execute the config's full (V, seed, algorithm) sweep.
    Sweep {
        /// JSON configuration file with a sweep section.
        config: PathBuf,
        /// Output directory; sweep_summary.csv is overwritten.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Worker threads (1 = serial).
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Run ten times the configured horizon.
        #[arg(long)]
        full_scale: bool,
    },
    /// Summarize a sweep CSV and print trend verdicts.
    Report {
        /// sweep_summary.csv produced by simulate or sweep.
        csv: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, print_bounds } => cmd_validate(&config, print_bounds),
        Command::Simulate {
            config,
            algo,
            v,
            seed,
            slots,
            out_dir,
            strict_invariants,
            trace,
        } => cmd_simulate(&config, &algo, v, seed, slots, &out_dir, strict_invariants, trace),
        Command::Sweep { config, out_dir, parallel, full_scale } => {
            cmd_sweep(&config, &out_dir, parallel, full_scale)
        }
        Command::Report { csv } => cmd_report(&csv),
    }
}

/// A validated configuration plus the bits of the raw file the commands
/// still need.
struct Loaded {
    model: NetworkModel,
    warnings: Vec<String>,
    sweep: Option<RawSweep>,
}

/// Reads and validates a configuration, printing diagnostics on failure.
fn load(path: &Path) -> Result<Loaded, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    let raw = RawConfig::from_json(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    let validated = validate_config(&raw).map_err(|errors| {
        for e in &errors {
            eprintln!("error: {}: {e}", path.display());
        }
        ExitCode::from(EXIT_CONFIG)
    })?;
    Ok(Loaded {
        model: validated.model,
        warnings: validated.warnings,
        sweep: raw.sweep,
    })
}

fn class_label(class: PowerClass) -> &'static str {
    match class {
        PowerClass::Harvest => "EH",
        PowerClass::Grid => "EG",
        PowerClass::Mixed => "ME",
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn cmd_validate(path: &Path, print_bounds: bool) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let model = &loaded.model;
    println!(
        "config ok: {} nodes, {} links, {} sessions",
        model.n_nodes(),
        model.n_links(),
        model.n_sessions()
    );
    println!("derived caps per node:");
    for (n, node) in model.nodes.iter().enumerate() {
        println!(
            "  {} ({}): mu_in_max={} mu_out_max={} p_total_max={} theta_e={}",
            node.id,
            class_label(node.power_class),
            model.caps.mu_in_max[n],
            model.caps.mu_out_max[n],
            model.caps.p_total_max[n],
            model.bounds.theta_e[n],
        );
    }
    for w in &loaded.warnings {
        println!("warning: {w}");
    }
    if print_bounds {
        let v_grid: Vec<f64> = match &loaded.sweep {
            Some(sweep) => sweep.v_grid.clone(),
            None => vec![model.params.v],
        };
        println!("bounds per V (worst entry over nodes and sessions):");
        for &v in &v_grid {
            let m = model.with_v(v);
            let w = max_of(&m.bounds.w_max);
            println!(
                "  V={v}: z_max={} qtilde_max={} q_max={} theta_e={} W={} ceil(W)={}",
                max_of(&m.bounds.z_max),
                max_of(&m.bounds.qtilde_max),
                max_of(&m.bounds.q_max),
                max_of(&m.bounds.theta_e),
                w,
                w.ceil(),
            );
        }
    }
    ExitCode::SUCCESS
}

/// Per-slot CSV trace: queue rows for every (node, session) pair plus one
/// solver row per slot, discriminated by the first column.
struct CsvTrace {
    writer: BufWriter<File>,
    node_ids: Vec<String>,
}

impl CsvTrace {
    fn create(path: &Path, model: &NetworkModel) -> std::io::Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        writeln!(writer, "kind,t,node,session,q,delay_q,z,e,sweeps,kkt")?;
        Ok(CsvTrace {
            writer,
            node_ids: model.nodes.iter().map(|n| n.id.clone()).collect(),
        })
    }
}

impl TraceSink for CsvTrace {
    fn queue_row(&mut self, t: u64, node: usize, session: usize, q: f64, delay_q: f64, z: f64, e: f64) {
        let _ = writeln!(
            self.writer,
            "queue,{t},{},{session},{q},{delay_q},{z},{e},,",
            self.node_ids[node]
        );
    }

    fn solver_row(&mut self, t: u64, sweeps: u32, kkt_residual: f64) {
        let _ = writeln!(self.writer, "solver,{t},,,,,,,{sweeps},{kkt_residual}");
    }
}

/// Appends one row to `sweep_summary.csv`, writing the header first when the
/// file does not exist yet.
fn append_summary_row(out_dir: &Path, report: &RunReport) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep_summary.csv");
    let fresh = !path.exists();
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{CSV_HEADER}")?;
    }
    writeln!(file, "{}", report.csv_row())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    algo: &str,
    v: Option<f64>,
    seed: Option<u64>,
    slots: Option<u64>,
    out_dir: &Path,
    strict: bool,
    trace: bool,
) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let algo: Algo = match algo.parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let base = &loaded.model;
    let model = base.with_v(v.unwrap_or(base.params.v));
    let seed = seed.unwrap_or(model.params.seed);
    let slots = slots.unwrap_or(model.params.slots);

    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut sink = if trace {
        match CsvTrace::create(&out_dir.join("trace.csv"), &model) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: cannot create trace: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    } else {
        None
    };

    let started = Instant::now();
    let report = run_simulation(
        &model,
        seed,
        slots,
        algo,
        sink.as_mut().map(|s| s as &mut dyn TraceSink),
    );
    if let Some(s) = sink {
        drop(s);
    }
    if let Err(e) = append_summary_row(out_dir, &report) {
        eprintln!("error: cannot write summary: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    println!(
        "V={} seed={} algo={} slots={} ({:.1?})",
        report.v, report.seed, report.algo, slots, started.elapsed()
    );
    println!(
        "  phi_bar={} drops_realized={} drops_decided={} max_delay_ratio={}",
        report.phi_bar, report.drops_realized, report.drops_decided, report.max_delay_ratio
    );
    println!(
        "  violations={} B={} gap_bound={}",
        report.violations, report.b_bound, report.gap_bound
    );
    for v in &report.violation_detail {
        eprintln!("violation: {v}");
    }
    if strict && report.violations > 0 {
        eprintln!("strict mode: {} invariant violations", report.violations);
        return ExitCode::from(EXIT_STRICT);
    }
    ExitCode::SUCCESS
}

/// Runs one plan cell, converting a panic into an error message so one bad
/// cell cannot take down the whole sweep.
fn run_cell(model: &NetworkModel, spec: &RunSpec) -> Result<RunReport, String> {
    panic::catch_unwind(AssertUnwindSafe(|| run_one(model, spec))).map_err(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        format!("V={} seed={} algo={}: {msg}", spec.v, spec.seed, spec.algo)
    })
}

fn cmd_sweep(path: &Path, out_dir: &Path, parallel: usize, full_scale: bool) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let Some(sweep) = &loaded.sweep else {
        eprintln!("error: {} has no sweep section", path.display());
        return ExitCode::from(EXIT_CONFIG);
    };
    let mut specs = match plan_from_sweep(sweep) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if full_scale {
        for s in &mut specs {
            s.slots *= 10;
        }
    }

    let model = &loaded.model;
    let started = Instant::now();
    println!(
        "sweep: {} runs ({} V x {} seeds x {} algos), {} slots each, {} worker(s)",
        specs.len(),
        sweep.v_grid.len(),
        sweep.seeds.len(),
        sweep.algos.len(),
        specs.first().map_or(0, |s| s.slots),
        parallel.max(1),
    );

    let results: Vec<Result<RunReport, String>> = if parallel <= 1 {
        specs.iter().map(|s| run_cell(model, s)).collect()
    } else {
        let pool = match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: worker pool: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        };
        use rayon::prelude::*;
        pool.install(|| specs.par_iter().map(|s| run_cell(model, s)).collect())
    };

    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let csv_path = out_dir.join("sweep_summary.csv");
    let mut writer = match File::create(&csv_path).map(BufWriter::new) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", csv_path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut failures = 0usize;
    let mut write_err = None;
    if let Err(e) = writeln!(writer, "{CSV_HEADER}") {
        write_err = Some(e);
    }
    for result in &results {
        match result {
            Ok(report) => {
                if let Err(e) = writeln!(writer, "{}", report.csv_row()) {
                    write_err = Some(e);
                }
            }
            Err(msg) => {
                failures += 1;
                eprintln!("failed: {msg}");
            }
        }
    }
    if let Some(e) = write_err.or_else(|| writer.flush().err()) {
        eprintln!("error: writing {}: {e}", csv_path.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    println!(
        "wrote {} ({} rows, {} failed) in {:.1?}",
        csv_path.display(),
        results.len() - failures,
        failures,
        started.elapsed()
    );
    if failures > 0 {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_phi_table(rows: &[SweepRow], algo: &str) {
    let stats = stats_by_v(rows, algo, |r| r.phi_bar);
    if stats.is_empty() {
        return;
    }
    println!("phi_bar by V ({algo}):");
    for (v, mean, se) in stats {
        println!("  V={v}: {mean:.6} +/- {se:.6}");
    }
}

fn cmd_report(path: &Path) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let rows = match parse_csv(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut algos: Vec<&str> = rows.iter().map(|r| r.algo.as_str()).collect();
    algos.sort_unstable();
    algos.dedup();
    println!("{} rows, algorithms: {}", rows.len(), algos.join(", "));
    for algo in &algos {
        print_phi_table(&rows, algo);
    }

    let monotone = monotonicity_verdict(&rows);
    let diminishing = diminishing_verdict(&rows);
    let fit = backlog_fit(&rows);
    let fit_verdict = match fit {
        Some((_, _, r2)) => {
            if r2 >= 0.95 {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        None => Verdict::Skipped,
    };
    let drops = drop_comparison_verdict(&rows, 750.0);
    let dominance = phi_dominance_verdict(&rows);
    let (delay_max, delay) = delay_ratio_verdict(&rows);
    // The queue and energy bounds are guarantees of the controller, not of
    // the baseline; the baseline is expected to overdraw its battery.
    let clca_rows: Vec<SweepRow> = rows.iter().filter(|r| r.algo == "clca").cloned().collect();
    let violations = violations_total(&clca_rows);
    let baseline_violations = violations_total(&rows) - violations;
    let violations_verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };

    println!("verdicts:");
    println!("  utility non-decreasing in V:        {monotone}");
    println!("  diminishing utility increments:     {diminishing}");
    match fit {
        Some((slope, intercept, r2)) => println!(
            "  backlog linear in V (R^2={r2:.4}, slope={slope:.3}, intercept={intercept:.1}): {fit_verdict}"
        ),
        None => println!("  backlog linear in V:                {fit_verdict}"),
    }
    println!("  drops at V=750 (clca 0, neely >0):  {drops}");
    println!("  baseline utility dominated:         {dominance}");
    println!("  delay ratio max={delay_max} (<= 1):      {delay}");
    println!("  bound violations (clca)={violations}:        {violations_verdict}");
    if baseline_violations > 0 {
        println!("  (baseline rows report {baseline_violations} energy overdraws, as expected)");
    }

    let failed = [monotone, diminishing, fit_verdict, drops, dominance, delay, violations_verdict]
        .contains(&Verdict::Fail);
    if failed {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::SUCCESS
    }
}
