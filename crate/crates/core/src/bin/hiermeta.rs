//! Batch CLI for the hierarchical-lattice metastability toolkit.
//!
//! Subcommands: `analyze` (closed-form report), `oracle` (exhaustive small
//! instance analysis), `simulate` (kinetic Monte Carlo hitting times),
//! `profile` (reference-path energy CSV) and `verify` (cross-check matrix).
//!
//! Exit codes: 0 success, 1 internal error, 2 domain/regime error,
//! 3 size-cap error.

use clap::{Parser, Subcommand};
use hiermeta::analytics;
use hiermeta::dynamics::{self, GateLookup, SimConfig};
use hiermeta::error::Error as HmError;
use hiermeta::lattice::{LatticeParams, DEFAULT_ORACLE_CAP};
use hiermeta::oracle;
use hiermeta::refpath::{self, PathKind};
use serde::Deserialize;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hiermeta",
    version,
    about = "Metastability on hierarchical lattices"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (defaults to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format for data files.
    #[arg(long, global = true, value_parser = ["json", "csv"])]
    format: Option<String>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replica count override.
    #[arg(long, global = true)]
    replicas: Option<u64>,

    /// Inverse temperature override.
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Worker threads (falls back to HIERMETA_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Vertex cap for exhaustive oracle computations.
    #[arg(long, global = true)]
    oracle_cap: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form metastability report (JSON; JSON-lines under a sweep).
    Analyze,
    /// Exhaustive landscape analysis on a small instance (JSON).
    Oracle,
    /// Sample crossover times by kinetic Monte Carlo (CSV + JSON summary).
    Simulate,
    /// Reference-path energy profile as CSV rows `k,energy`.
    Profile,
    /// Run every enabled cross-check; exit 0 only if all pass.
    Verify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    #[serde(default)]
    oracle: OracleSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    sweep: Option<SweepSection>,
    #[serde(default)]
    verify: VerifySection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    #[serde(rename = "N")]
    dim: u32,
    #[serde(rename = "n")]
    levels: u32,
    couplings: CouplingSpec,
    h: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CouplingSpec {
    Explicit(Vec<f64>),
    Named(NamedCouplings),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum NamedCouplings {
    Standard(f64),
    Scaled(Vec<f64>),
    Explicit(Vec<f64>),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    cap: Option<u64>,
    /// Write the full landscape (bitcode, volume, energy) here; V <= 16.
    landscape_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimSection {
    beta: Option<f64>,
    replicas: Option<u64>,
    seed: Option<u64>,
    max_events: Option<u64>,
    record_gate: Option<bool>,
    /// Where to write the per-replica samples CSV.
    samples_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    h: Vec<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    /// Inverse temperatures to cross-check by simulation.
    #[serde(default)]
    betas: Vec<f64>,
    replicas: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    format: Option<String>,
    path: Option<PathBuf>,
}

impl ModelConfig {
    fn params(&self, h: f64) -> Result<LatticeParams, HmError> {
        match &self.couplings {
            CouplingSpec::Explicit(js) => LatticeParams::new(self.dim, self.levels, js.clone(), h),
            CouplingSpec::Named(NamedCouplings::Explicit(js)) => {
                LatticeParams::new(self.dim, self.levels, js.clone(), h)
            }
            CouplingSpec::Named(NamedCouplings::Standard(jt)) => {
                LatticeParams::standard(self.dim, self.levels, *jt, h)
            }
            CouplingSpec::Named(NamedCouplings::Scaled(jts)) => {
                LatticeParams::scaled(self.dim, self.levels, jts, h)
            }
        }
    }
}

fn fail(code: i32, msg: &str) -> ! {
    eprintln!("error: {msg}");
    std::process::exit(code);
}

fn lib_fail(e: HmError) -> ! {
    eprintln!("error: {e}");
    std::process::exit(e.exit_code());
}

fn load_config(cli: &Cli) -> RunConfig {
    let Some(path) = &cli.config else {
        fail(2, "--config PATH is required");
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => fail(2, &format!("cannot read {}: {e}", path.display())),
    };
    match serde_json::from_str::<RunConfig>(&text) {
        Ok(c) => c,
        Err(e) => fail(
            2,
            &format!(
                "malformed config {} (line {}, column {}): {e}",
                path.display(),
                e.line(),
                e.column()
            ),
        ),
    }
}

fn thread_count(cli: &Cli) -> usize {
    cli.threads
        .or_else(|| {
            std::env::var("HIERMETA_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn open_out(path: &Option<PathBuf>) -> Box<dyn Write> {
    match path {
        Some(p) => match std::fs::File::create(p) {
            Ok(f) => Box::new(std::io::BufWriter::new(f)),
            Err(e) => fail(1, &format!("cannot create {}: {e}", p.display())),
        },
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    }
}

fn sim_config(cli: &Cli, cfg: &RunConfig) -> SimConfig {
    SimConfig {
        beta: cli.beta.or(cfg.sim.beta).unwrap_or(1.0),
        replicas: cli.replicas.or(cfg.sim.replicas).unwrap_or(1000),
        seed: cli.seed.or(cfg.sim.seed).unwrap_or(0),
        max_events: cfg.sim.max_events.unwrap_or(10_000_000),
        record_gate: cfg.sim.record_gate.unwrap_or(false),
    }
}

fn chosen_format(cli: &Cli, cfg: &RunConfig) -> String {
    cli.format
        .clone()
        .or(cfg.output.format.clone())
        .unwrap_or_else(|| "json".into())
}

fn run_analyze(cli: &Cli, cfg: &RunConfig) {
    let out_path = cli.out.clone().or(cfg.output.path.clone());
    let mut out = open_out(&out_path);
    let format = chosen_format(cli, cfg);
    let points: Vec<f64> = match &cfg.sweep {
        Some(s) => s.h.clone(),
        None => vec![cfg.model.h],
    };
    let single = points.len() == 1;
    if format == "csv" {
        writeln!(
            out,
            "h,mhat,shat,regime_m,regime_s,gamma_star,critical_volume,c_star_count,k_star_inverse"
        )
        .ok();
    }
    for h in points {
        let report = cfg.model.params(h).and_then(|p| analytics::analyze(&p));
        match report {
            Ok(report) => {
                if format == "csv" {
                    let (rm, rs) = report
                        .regime
                        .map(|r| (r.m.to_string(), r.s.to_string()))
                        .unwrap_or_default();
                    writeln!(
                        out,
                        "{h},{},{},{rm},{rs},{},{},{},{}",
                        report.mhat,
                        report.shat,
                        report.gamma_star,
                        report.critical_volume,
                        report.c_star_count,
                        report.k_star_inverse
                    )
                    .unwrap_or_else(|e| fail(1, &format!("write: {e}")));
                } else {
                    let json = serde_json::to_string(&report).expect("serializable report");
                    writeln!(out, "{json}").unwrap_or_else(|e| fail(1, &format!("write: {e}")));
                }
            }
            Err(e) => {
                if single {
                    lib_fail(e);
                }
                if format == "csv" {
                    writeln!(out, "{h},,,,,,,,").ok();
                } else {
                    writeln!(out, "{{\"h\":{h},\"error\":{:?}}}", e.to_string()).ok();
                }
            }
        }
    }
    out.flush().ok();
}

fn run_oracle(cli: &Cli, cfg: &RunConfig) {
    let params = cfg
        .model
        .params(cfg.model.h)
        .unwrap_or_else(|e| lib_fail(e));
    let cap = cli.oracle_cap.or(cfg.oracle.cap);
    let report = oracle::oracle_report(&params, cap).unwrap_or_else(|e| lib_fail(e));
    if let Some(csv_path) = &cfg.oracle.landscape_csv {
        if params.vertex_count() > 16 {
            fail(3, "landscape dump is limited to 16 vertices");
        }
        let landscape = oracle::LandscapeIndex::build(&params, cap.unwrap_or(DEFAULT_ORACLE_CAP))
            .unwrap_or_else(|e| lib_fail(e));
        let mut f = open_out(&Some(csv_path.clone()));
        landscape.write_csv(&mut f).unwrap_or_else(|e| lib_fail(e));
        f.flush().ok();
    }
    let out_path = cli.out.clone().or(cfg.output.path.clone());
    let mut out = open_out(&out_path);
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    writeln!(out, "{json}").unwrap_or_else(|e| fail(1, &format!("write: {e}")));
    out.flush().ok();
}

fn gate_lookup(params: &LatticeParams, cap: Option<u64>) -> Result<GateLookup, HmError> {
    let landscape = oracle::LandscapeIndex::build(params, cap.unwrap_or(DEFAULT_ORACLE_CAP))?;
    let gates = oracle::gate_sets(&landscape)?;
    Ok(GateLookup::new(gates.c_star.clone()))
}

fn run_simulate(cli: &Cli, cfg: &RunConfig) {
    let params = cfg
        .model
        .params(cfg.model.h)
        .unwrap_or_else(|e| lib_fail(e));
    let sim = sim_config(cli, cfg);
    let gate = if sim.record_gate {
        Some(
            gate_lookup(&params, cli.oracle_cap.or(cfg.oracle.cap)).unwrap_or_else(|e| lib_fail(e)),
        )
    } else {
        None
    };
    let samples = dynamics::simulate_hitting(&params, &sim, gate.as_ref(), thread_count(cli))
        .unwrap_or_else(|e| lib_fail(e));
    let samples_path = cli.out.clone().or(cfg.sim.samples_csv.clone());
    if let Some(p) = &samples_path {
        let mut f = open_out(&Some(p.clone()));
        if chosen_format(cli, cfg) == "json" && cli.format.is_some() {
            for s in &samples {
                writeln!(
                    f,
                    "{}",
                    serde_json::to_string(s).expect("serializable sample")
                )
                .unwrap_or_else(|e| fail(1, &format!("write: {e}")));
            }
        } else {
            dynamics::write_samples_csv(&mut f, &samples).unwrap_or_else(|e| lib_fail(e));
        }
        f.flush().ok();
    }
    match dynamics::summarize(&samples, sim.record_gate) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("serializable summary")
            );
        }
        Err(e) => {
            eprintln!("summary unavailable: {e}");
            if samples_path.is_none() {
                let mut f = open_out(&None);
                dynamics::write_samples_csv(&mut f, &samples).ok();
                f.flush().ok();
            }
        }
    }
}

fn run_profile(cli: &Cli, cfg: &RunConfig) {
    let params = cfg
        .model
        .params(cfg.model.h)
        .unwrap_or_else(|e| lib_fail(e));
    let kind = if !params.is_non_increasing() && params.is_non_decreasing() {
        PathKind::Spread
    } else {
        PathKind::Natural
    };
    let out_path = cli.out.clone().or(cfg.output.path.clone());
    let mut out = open_out(&out_path);
    refpath::write_profile_csv(&mut out, kind, &params).unwrap_or_else(|e| lib_fail(e));
    out.flush().ok();
}

struct CheckList {
    failures: usize,
}

impl CheckList {
    fn new() -> Self {
        CheckList { failures: 0 }
    }

    fn record(&mut self, name: &str, pass: bool, detail: String) {
        if pass {
            println!("PASS {name}: {detail}");
        } else {
            self.failures += 1;
            println!("FAIL {name}: {detail}");
        }
    }

    fn skip(&self, name: &str, why: String) {
        println!("SKIP {name}: {why}");
    }
}

fn run_verify(cli: &Cli, cfg: &RunConfig) {
    let params = cfg
        .model
        .params(cfg.model.h)
        .unwrap_or_else(|e| lib_fail(e));
    let cap = cli
        .oracle_cap
        .or(cfg.oracle.cap)
        .unwrap_or(DEFAULT_ORACLE_CAP);
    let threads = thread_count(cli);
    let mut checks = CheckList::new();
    let v = params.vertex_count();

    // Closed form against direct energies along the reference path.
    if v <= 1024 {
        let mut worst = 0.0f64;
        for k in 0..=v {
            let sigma = hiermeta::Configuration::prefix(k, &params).unwrap();
            let direct = hiermeta::energy::relative_energy(&sigma, &params)
                .unwrap()
                .0;
            let closed = refpath::profile_closed_form(k, &params).unwrap();
            worst = worst.max((direct - closed).abs());
        }
        checks.record(
            "profile_closed_form",
            worst < 1e-12,
            format!("max |closed - direct| = {worst:.3e}"),
        );
    } else {
        checks.skip("profile_closed_form", format!("V = {v} too large"));
    }

    let assumptions = hiermeta::energy::check_assumptions(&params);

    // Exhaustive checks.
    let landscape = if v <= cap {
        Some(oracle::LandscapeIndex::build(&params, cap).unwrap_or_else(|e| lib_fail(e)))
    } else {
        checks.skip("oracle", format!("V = {v} exceeds cap {cap}"));
        None
    };

    if let Some(landscape) = &landscape {
        let full = (landscape.states() - 1) as u64;
        let phi =
            oracle::communication_height(landscape, &[0], &[full]).unwrap_or_else(|e| lib_fail(e));
        if params.is_non_increasing() || params.is_non_decreasing() {
            let scan = analytics::gamma_star(&params, analytics::GammaMethod::ProfileExact)
                .unwrap_or_else(|e| lib_fail(e));
            checks.record(
                "barrier_profile_vs_oracle",
                (phi - scan).abs() <= 1e-12 * phi.abs().max(1.0),
                format!("oracle {phi}, profile {scan}"),
            );
        }
        let stability = oracle::stability_report(landscape).unwrap_or_else(|e| lib_fail(e));
        if assumptions.a1_holds {
            checks.record(
                "metastable_state",
                stability.omega_meta == vec![0],
                format!("deepest non-global minima {:?}", stability.omega_meta),
            );
        } else {
            checks.record(
                "no_local_minima",
                stability.strict_minima == vec![full],
                format!("strict minima {:?}", stability.strict_minima),
            );
        }
        if assumptions.a1_holds {
            let gates = oracle::gate_sets(landscape).unwrap_or_else(|e| lib_fail(e));
            let cap_value = oracle::capacity(landscape, &gates).unwrap_or_else(|e| lib_fail(e));
            match analytics::critical_volume(&params, analytics::VolumeMethod::ProfileArgmax) {
                Ok(cv) => {
                    checks.record(
                        "gate_volume",
                        gates.conditions.uniform_volume == Some(cv.volume),
                        format!(
                            "oracle {:?}, profile argmax {}",
                            gates.conditions.uniform_volume, cv.volume
                        ),
                    );
                    match hiermeta::lattice::translation_count(cv.volume, &params) {
                        Ok(count) => checks.record(
                            "gate_cardinality",
                            count == gates.c_star.len() as u128,
                            format!("formula {count}, oracle {}", gates.c_star.len()),
                        ),
                        Err(e) => checks.record("gate_cardinality", false, e.to_string()),
                    }
                }
                Err(e) => checks.skip("gate_volume", e.to_string()),
            }
            match analytics::prefactor(&params, analytics::PrefactorMethod::Reduced) {
                Ok(pf) => {
                    checks.record(
                        "capacity_reduced",
                        (pf.inverse - cap_value).abs() <= 1e-9 * cap_value.abs().max(1.0),
                        format!("reduced {}, oracle {cap_value}", pf.inverse),
                    );
                }
                Err(e) => checks.skip("capacity_reduced", e.to_string()),
            }
            if let Ok(pf) =
                analytics::prefactor(&params, analytics::PrefactorMethod::StandardClosedForm)
            {
                checks.record(
                    "capacity_closed_form",
                    (pf.inverse - cap_value).abs() <= 1e-9 * cap_value.abs().max(1.0),
                    format!("closed form {}, oracle {cap_value}", pf.inverse),
                );
            }
        }
    }

    // Subpath maximum identity.
    if assumptions.a1_holds {
        match (analytics::mhat(&params), analytics::shat(&params)) {
            (Ok(m), Ok(s)) => {
                let sc = s.ceil();
                let nf = params.dim as f64;
                let closed =
                    sc * (2.0 * s - sc + 1.0) * params.coupling(m + 1) * nf.powi(2 * m as i32);
                let profile =
                    refpath::profile_closed_form(sc as u64 * params.block_size(m), &params)
                        .unwrap_or_else(|e| lib_fail(e));
                checks.record(
                    "subpath_maximum",
                    (closed - profile).abs() <= 1e-9 * profile.abs().max(1.0),
                    format!("closed {closed}, profile {profile}"),
                );
            }
            _ => checks.skip("subpath_maximum", "metastable scale undefined".into()),
        }
    }

    // Standard-interaction symmetry at the located regime threshold.
    if params.standard_j_tilde().is_some() && assumptions.a1_holds {
        match analytics::locate_regime(&params) {
            Ok(regime) => match refpath::check_symmetry_standard(regime.m, regime.s, &params) {
                Ok(sym) => {
                    let worst = sym
                        .intervals
                        .iter()
                        .map(|(_, _, _, d)| *d)
                        .fold(sym.global_deviation, f64::max);
                    checks.record(
                        "standard_symmetry",
                        worst <= 1e-12,
                        format!("max deviation {worst:.3e} at h = {}", sym.field),
                    );
                }
                Err(e) => checks.skip("standard_symmetry", e.to_string()),
            },
            Err(e) => checks.skip("standard_symmetry", e.to_string()),
        }
    }

    // Simulation cross-checks.
    let replicas = cli.replicas.or(cfg.verify.replicas).unwrap_or(10_000);
    for &beta in &cfg.verify.betas {
        let name = format!("simulation_beta_{beta}");
        if v > oracle::SOLVER_CAP {
            checks.skip(&name, format!("V = {v} exceeds solver cap"));
            continue;
        }
        let exact = oracle::exact_mean_hitting_time(&params, beta, oracle::SOLVER_CAP)
            .unwrap_or_else(|e| lib_fail(e));
        let sim = SimConfig {
            beta,
            replicas,
            seed: cli.seed.or(cfg.sim.seed).unwrap_or(0),
            max_events: cfg.sim.max_events.unwrap_or(10_000_000),
            record_gate: false,
        };
        let samples = dynamics::simulate_hitting(&params, &sim, None, threads)
            .unwrap_or_else(|e| lib_fail(e));
        let summary = dynamics::summarize(&samples, false).unwrap_or_else(|e| lib_fail(e));
        let dev = (summary.mean - exact).abs();
        checks.record(
            &name,
            dev <= 3.0 * summary.std_error,
            format!(
                "exact {exact:.4}, sampled {:.4} +- {:.4}",
                summary.mean, summary.std_error
            ),
        );
        if assumptions.a1_holds && beta >= 3.0 {
            if let (Ok(gamma), Ok(pf)) = (
                analytics::gamma_star(&params, analytics::GammaMethod::ProfileExact),
                analytics::prefactor(&params, analytics::PrefactorMethod::Reduced),
            ) {
                let ratio = summary.mean * (-beta * gamma).exp() / pf.k_star;
                checks.record(
                    &format!("kramers_ratio_beta_{beta}"),
                    (0.8..=1.25).contains(&ratio),
                    format!("mean e^(-beta Gamma) / K = {ratio:.4}"),
                );
            }
        }
    }

    // Determinism spot check.
    if v <= 64 {
        let sim = SimConfig {
            beta: cli.beta.or(cfg.sim.beta).unwrap_or(2.0),
            replicas: 200.min(replicas),
            seed: cli.seed.or(cfg.sim.seed).unwrap_or(0),
            max_events: 1_000_000,
            record_gate: false,
        };
        let a = dynamics::simulate_hitting(&params, &sim, None, 1).unwrap_or_else(|e| lib_fail(e));
        let b = dynamics::simulate_hitting(&params, &sim, None, threads.max(2))
            .unwrap_or_else(|e| lib_fail(e));
        let same = a
            .iter()
            .zip(&b)
            .all(|(x, y)| x.tau.to_bits() == y.tau.to_bits() && x.events == y.events);
        checks.record(
            "determinism",
            same,
            format!("{} replicas, 1 vs {} threads", sim.replicas, threads.max(2)),
        );
    }

    if checks.failures > 0 {
        std::process::exit(1);
    }
}

fn main() {
    let cli = Cli::parse();
    let cfg = load_config(&cli);
    match cli.command {
        Command::Analyze => run_analyze(&cli, &cfg),
        Command::Oracle => run_oracle(&cli, &cfg),
        Command::Simulate => run_simulate(&cli, &cfg),
        Command::Profile => run_profile(&cli, &cfg),
        Command::Verify => run_verify(&cli, &cfg),
    }
}
